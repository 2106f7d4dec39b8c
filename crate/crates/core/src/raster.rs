//! Grayscale frames and their on-disk formats.
//!
//! Supported inputs are binary and ASCII PGM (`P5`/`P2`, 8 or 16 bit),
//! binary PPM (`P6`, converted to luma) and a raw planar format:
//!
//! ```text
//! ACGRAY 1\n
//! <width> <height> <u8|u16le|f32le>\n
//! <width * height samples, row-major>
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub const MIN_DIMENSION: usize = 16;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    samples: Vec<f32>,
    mask: Option<Vec<bool>>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, samples: Vec<f32>) -> Result<Self> {
        if width < MIN_DIMENSION || height < MIN_DIMENSION {
            return Err(Error::InvalidInput(format!(
                "image {width}x{height} is smaller than {MIN_DIMENSION}x{MIN_DIMENSION}"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::InvalidInput("sample count does not match dimensions".into()));
        }
        Ok(Self {
            width,
            height,
            samples,
            mask: None,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.width * self.height {
            return Err(Error::InvalidInput("mask dimensions differ from the image".into()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.samples[y * self.width + x]
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(b"ACGRAY") {
            return parse_raw(&bytes).map_err(|r| Error::format(path, r));
        }
        parse_pnm(&bytes).map_err(|r| Error::format(path, r))
    }

    /// Reads a PGM as a boolean mask (non-zero = foreground).
    pub fn read_mask(path: &Path) -> Result<Vec<bool>> {
        let img = Self::read(path)?;
        Ok(img.samples.iter().map(|&v| v > 0.0).collect())
    }

    /// Binary PGM with the given bit depth (8 or 16).
    pub fn pgm_bytes(&self, bits: u8) -> Vec<u8> {
        let maxval: u32 = if bits == 16 { 65535 } else { 255 };
        let mut buf = format!("P5\n{} {}\n{}\n", self.width, self.height, maxval).into_bytes();
        for &s in &self.samples {
            let q = (s.clamp(0.0, 1.0) as f64 * maxval as f64).round() as u32;
            if bits == 16 {
                buf.extend_from_slice(&(q as u16).to_be_bytes());
            } else {
                buf.push(q as u8);
            }
        }
        buf
    }

    pub fn write_pgm(&self, path: &Path, bits: u8) -> Result<()> {
        crate::io::write_atomic(path, &self.pgm_bytes(bits))
    }

    /// Writes the raw planar format with `f32le` samples.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut buf = format!("ACGRAY 1\n{} {} f32le\n", self.width, self.height).into_bytes();
        for &s in &self.samples {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        crate::io::write_atomic(path, &buf)
    }
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.bytes[start..self.pos]).ok())?
    }

    fn number(&mut self) -> std::result::Result<usize, String> {
        self.next()
            .ok_or("truncated header")?
            .parse()
            .map_err(|e| format!("bad header field: {e}"))
    }
}

fn parse_pnm(bytes: &[u8]) -> std::result::Result<RasterImage, String> {
    let mut tok = Tokens { bytes, pos: 0 };
    let magic = tok.next().ok_or("empty file")?;
    let (w, h) = (tok.number()?, tok.number()?);
    let maxval = tok.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid maxval {maxval}"));
    }
    let scale = 1.0 / maxval as f32;
    let samples: Vec<f32> = match magic {
        "P2" => {
            let mut v = Vec::with_capacity(w * h);
            for _ in 0..w * h {
                v.push(tok.number()? as f32 * scale);
            }
            v
        }
        "P5" | "P6" => {
            // Exactly one whitespace byte separates the header from the data.
            let data = &bytes[tok.pos + 1..];
            let channels = if magic == "P6" { 3 } else { 1 };
            let bps = if maxval > 255 { 2 } else { 1 };
            let need = w * h * channels * bps;
            if data.len() < need {
                return Err(format!("expected {need} data bytes, found {}", data.len()));
            }
            let sample = |i: usize| -> f32 {
                if bps == 2 {
                    u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f32 * scale
                } else {
                    data[i] as f32 * scale
                }
            };
            (0..w * h)
                .map(|i| {
                    if channels == 3 {
                        0.299 * sample(3 * i) + 0.587 * sample(3 * i + 1) + 0.114 * sample(3 * i + 2)
                    } else {
                        sample(i)
                    }
                })
                .collect()
        }
        other => return Err(format!("unsupported magic {other:?}")),
    };
    RasterImage::new(w, h, samples).map_err(|e| e.to_string())
}

fn parse_raw(bytes: &[u8]) -> std::result::Result<RasterImage, String> {
    let mut lines = bytes.splitn(3, |&b| b == b'\n');
    let magic = lines.next().ok_or("empty file")?;
    if magic != b"ACGRAY 1" {
        return Err("unsupported raw version".into());
    }
    let header = std::str::from_utf8(lines.next().ok_or("truncated header")?).map_err(|_| "header is not UTF-8")?;
    let data = lines.next().unwrap_or(&[]);
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err("header must be '<width> <height> <format>'".into());
    }
    let w: usize = fields[0].parse().map_err(|_| "bad width")?;
    let h: usize = fields[1].parse().map_err(|_| "bad height")?;
    let n = w * h;
    let samples = match fields[2] {
        "u8" if data.len() >= n => data[..n].iter().map(|&b| b as f32 / 255.0).collect(),
        "u16le" if data.len() >= 2 * n => data[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect(),
        "f32le" if data.len() >= 4 * n => data[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        "u8" | "u16le" | "f32le" => return Err("truncated sample data".into()),
        other => return Err(format!("unknown sample format {other:?}")),
    };
    RasterImage::new(w, h, samples).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_images() {
        assert!(RasterImage::filled(8, 32, 0.0).is_err());
    }

    #[test]
    fn pgm16_round_trip() {
        let img = RasterImage::from_fn(20, 17, |x, y| ((x + 3 * y) % 11) as f32 / 10.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        img.write_pgm(&p, 16).unwrap();
        let back = RasterImage::read(&p).unwrap();
        for (a, b) in img.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn raw_round_trip_is_exact() {
        let img = RasterImage::from_fn(16, 16, |x, y| (x * y) as f32 / 225.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.raw");
        img.write_raw(&p).unwrap();
        assert_eq!(RasterImage::read(&p).unwrap(), img);
    }

    #[test]
    fn ascii_pgm_with_comment() {
        let mut text = String::from("P2\n# comment\n16 16\n255\n");
        for i in 0..256 {
            text.push_str(&format!("{} ", i % 256));
        }
        let img = parse_pnm(text.as_bytes()).unwrap();
        assert!((img.get(15, 15) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ppm_converts_to_luma() {
        let mut bytes = b"P6\n16 16\n255\n".to_vec();
        for _ in 0..256 {
            bytes.extend_from_slice(&[255, 255, 255]);
        }
        let img = parse_pnm(&bytes).unwrap();
        assert!(img.samples().iter().all(|&v| (v - 1.0).abs() < 1e-5));
    }

    #[test]
    fn mask_dimensions_checked() {
        let img = RasterImage::filled(16, 16, 0.0).unwrap();
        assert!(img.clone().with_mask(vec![true; 10]).is_err());
        assert!(img.with_mask(vec![true; 256]).is_ok());
    }
}
