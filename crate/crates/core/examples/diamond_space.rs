//! Votes lines into a diamond space accumulator and finds their common point.
//!
//! ```text
//! cargo run --example diamond_space [-- accumulator.pgm]
//! ```

use std::path::PathBuf;

use autocalib::diamond::{DiamondSpace, LineObservation, DEFAULT_RESOLUTION};
use autocalib::geometry::{ImagePoint, Line2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let dump = std::env::args().nth(1).map(PathBuf::from);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let target = ImagePoint::new(420.0, -2600.0);

    let mut lines = Vec::new();
    for _ in 0..300 {
        let p = ImagePoint::new(rng.random_range(-900.0..900.0), rng.random_range(-500.0..500.0));
        lines.push(LineObservation::new(Line2::through(p, target)?, 1.0)?);
    }
    // Clutter with arbitrary directions.
    for _ in 0..300 {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let p = ImagePoint::new(rng.random_range(-900.0..900.0), rng.random_range(-500.0..500.0));
        lines.push(LineObservation::new(
            Line2::from_point_dir(p, ImagePoint::new(theta.cos(), theta.sin()))?,
            1.0,
        )?);
    }

    let mut space = DiamondSpace::new(DEFAULT_RESOLUTION, 960.0)?;
    space.accumulate_par(&lines);
    let best = space.find_maximum(None)?;
    let found = best.point.to_finite().expect("finite maximum");
    println!("cell ({}, {}) score {:.1}", best.row, best.col, best.score);
    println!("found {:.1?}, true {:.1?}, off by {:.1} px", found, target, found.distance(target));
    println!("cell size there {:.1} px", space.cell_extent_at(best.s, best.t));

    if let Some(path) = dump {
        space.write_pgm(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
