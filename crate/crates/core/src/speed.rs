//! Vehicle speed from tracked reference points.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::camera::CameraCalibration;
use crate::error::{Error, Result};
use crate::geometry::ImagePoint;

pub const DEFAULT_TAU: usize = 5;
const MS_TO_KMH: f64 = 3.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedMeasurement {
    pub track_id: u64,
    pub speed_kmh: f64,
    pub n_samples: usize,
    pub tau: usize,
    pub first_t: f64,
    pub last_t: f64,
    pub lane: Option<usize>,
    /// Speed of every usable `(i, i + τ)` pair, m/s.
    pub pair_speeds: Vec<f64>,
}

/// Lower-middle element for even counts.
pub fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(values[(values.len() - 1) / 2])
}

/// Median of the road-plane speeds between samples `τ` apart.
pub fn measure_speed(track_id: u64, points: &[(f64, ImagePoint)], calib: &CameraCalibration, tau: usize) -> Result<SpeedMeasurement> {
    let scale = calib.scale.ok_or(Error::MissingScale)?;
    let tau = tau.max(1);
    if points.len() < tau + 1 {
        return Err(Error::TooShortTrack {
            len: points.len(),
            need: tau + 1,
        });
    }
    if let Some(w) = points.windows(2).find(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidInput(format!(
            "track {track_id}: timestamps not increasing at t = {}",
            w[1].0
        )));
    }
    let ground: Vec<Result<_>> = points.iter().map(|&(_, p)| calib.project_to_road(p)).collect();
    let mut pair_speeds = Vec::with_capacity(points.len() - tau);
    for i in 0..points.len() - tau {
        if let (Ok(a), Ok(b)) = (&ground[i], &ground[i + tau]) {
            pair_speeds.push(scale * (b - a).norm() / (points[i + tau].0 - points[i].0));
        }
    }
    let mut sorted = pair_speeds.clone();
    let Some(v) = lower_median(&mut sorted) else {
        let (x, y) = points
            .iter()
            .zip(&ground)
            .find(|(_, g)| g.is_err())
            .map(|(p, _)| (p.1.x, p.1.y))
            .unwrap_or((f64::NAN, f64::NAN));
        return Err(Error::HorizonPoint { x, y });
    };
    Ok(SpeedMeasurement {
        track_id,
        speed_kmh: v * MS_TO_KMH,
        n_samples: points.len(),
        tau,
        first_t: points[0].0,
        last_t: points[points.len() - 1].0,
        lane: None,
        pair_speeds,
    })
}

pub fn speeds_csv(measurements: &[SpeedMeasurement]) -> String {
    let mut out = String::from("track_id,speed_kmh,n_samples,first_t,last_t,lane\n");
    for m in measurements {
        let lane = m.lane.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            m.track_id, m.speed_kmh, m.n_samples, m.first_t, m.last_t, lane
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageSize;

    fn calib() -> CameraCalibration {
        CameraCalibration::from_vps(
            ImagePoint::new(300.0, -500.0),
            ImagePoint::new(-4000.0, -400.0),
            ImageSize::new(1920, 1080),
        )
        .unwrap()
        .with_scale(7.0)
    }

    fn straight_track(c: &CameraCalibration, n: usize, dt: f64, v_ms: f64) -> Vec<(f64, ImagePoint)> {
        let [flow, _, _] = c.road_axes().unwrap();
        let start = c.project_to_road(ImagePoint::new(0.0, 300.0)).unwrap();
        let lambda = c.scale.unwrap();
        (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let p = start + flow * (v_ms * t / lambda);
                (t, c.image_of(&p).unwrap())
            })
            .collect()
    }

    #[test]
    fn constant_velocity_is_recovered_for_any_tau() {
        let c = calib();
        let pts = straight_track(&c, 30, 0.04, 80.0 / 3.6);
        for tau in 1..=10 {
            let m = measure_speed(1, &pts, &c, tau).unwrap();
            assert!((m.speed_kmh - 80.0).abs() < 1e-6, "{tau}: {}", m.speed_kmh);
        }
    }

    #[test]
    fn short_track_is_rejected() {
        let c = calib();
        let pts = straight_track(&c, 5, 0.04, 20.0);
        assert!(matches!(
            measure_speed(1, &pts, &c, 5),
            Err(Error::TooShortTrack { len: 5, need: 6 })
        ));
    }

    #[test]
    fn missing_scale() {
        let c = calib();
        let pts = straight_track(&c, 10, 0.04, 20.0);
        assert!(matches!(measure_speed(1, &pts, &c.without_scale(), 5), Err(Error::MissingScale)));
    }

    #[test]
    fn lower_median_even() {
        assert_eq!(lower_median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&mut [5.0]), Some(5.0));
    }
}
