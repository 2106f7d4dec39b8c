//! Randomized property suites, shared by the property tests and the
//! acceptance run. Each suite runs [`CASES`] generated cases from a fixed
//! seed and reports the first counterexample.

use autocalib::diamond::{DiamondSpace, LineObservation};
use autocalib::edgelets::{edgelet_at, eigen_sym2, gradient_field, Edgelet};
use autocalib::geometry::{BBox, HomPoint, ImagePoint, ImageSize, Line2};
use autocalib::manual::{optimize_second_vp, second_vp_grid, second_vp_objective, vp_least_squares, GridOptions};
use autocalib::raster::RasterImage;
use autocalib::scale::{iou, kde_argmax, ScaleSample, KDE_POINTS};
use autocalib::sim::{NoiseSpec, Scene, SceneConfig};
use autocalib::tracking::kalman::{BoxFilter, KalmanParams, Measurement};
use nalgebra::{Matrix2, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

pub const CASES: u32 = 128;

pub struct Suite {
    pub name: &'static str,
    pub run: fn() -> Result<(), String>,
}

pub const SUITES: [Suite; 6] = [
    Suite {
        name: "diamond space",
        run: diamond,
    },
    Suite {
        name: "edgelets",
        run: edgelets,
    },
    Suite {
        name: "kalman",
        run: kalman,
    },
    Suite {
        name: "iou",
        run: iou_axioms,
    },
    Suite {
        name: "second vp optimizer",
        run: second_vp,
    },
    Suite {
        name: "kde weights",
        run: kde_weights,
    },
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
}

fn check<S, F>(what: &str, strategy: S, test: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    runner(CASES).run(&strategy, test).map_err(|e| format!("{what}: {e}"))
}

// ---- diamond space -----------------------------------------------------

fn line_strategy() -> impl Strategy<Value = (f64, f64, f64, f64)> + Clone {
    (0.0..std::f64::consts::TAU, -3000.0..3000.0f64, 0.0..4.0f64, 0.0..1.0f64)
}

fn observation((theta, c, w, _): (f64, f64, f64, f64)) -> LineObservation {
    LineObservation::new(Line2::new(theta.cos(), theta.sin(), c).unwrap(), w).unwrap()
}

fn space(resolution: usize) -> DiamondSpace {
    DiamondSpace::with_center(resolution, 800.0, ImagePoint::new(13.0, -7.0)).unwrap()
}

pub fn diamond() -> Result<(), String> {
    let point = (-1e4..1e4f64, -1e4..1e4f64, prop_oneof![Just(0.0), 1e-3..10.0f64, -10.0..-1e-3f64]);
    check("bijection", (point, 10.0..5000.0f64), |((x, y, w), norm)| {
        prop_assume!(x.abs() + y.abs() + w.abs() > 1e-6);
        let ds = DiamondSpace::with_center(101, norm, ImagePoint::new(40.0, -25.0)).unwrap();
        let p = HomPoint::new(x, y, w);
        let (s, t) = ds.to_diamond(&p);
        prop_assert!(s.abs() + t.abs() <= 1.0 + 1e-12);
        let q = ds.from_diamond(s, t);
        let a = p.0.normalize();
        let b = q.0.normalize();
        prop_assert!(a.cross(&b).norm() < 1e-9, "{:?} came back as {:?}", p, q);
        Ok(())
    })?;

    let lines = prop::collection::vec(line_strategy(), 1..40);
    check("merge", (lines.clone(), 0usize..40), |(ls, cut)| {
        let obs: Vec<LineObservation> = ls.into_iter().map(observation).collect();
        let cut = cut.min(obs.len());
        let mut all = space(61);
        all.accumulate(&obs);
        let mut a = space(61);
        a.accumulate(&obs[..cut]);
        let mut b = space(61);
        b.accumulate(&obs[cut..]);
        a.merge(&b).unwrap();
        prop_assert_eq!(a.raw_grid(), all.raw_grid());
        Ok(())
    })?;

    let shuffled = lines.prop_flat_map(|ls| (Just(ls.clone()), Just(ls).prop_shuffle()));
    check("permutation", shuffled, |(ls, perm)| {
        let mut a = space(61);
        a.accumulate(&ls.into_iter().map(observation).collect::<Vec<_>>());
        let mut b = space(61);
        b.accumulate_par(&perm.into_iter().map(observation).collect::<Vec<_>>());
        prop_assert_eq!(a.raw_grid(), b.raw_grid());
        Ok(())
    })
}

// ---- edgelets ----------------------------------------------------------

/// Image whose left-hand side of a line through `(cx, cy)` at angle `theta`
/// is bright, with a Gaussian-blurred step.
fn edge_image(n: usize, theta: f64, cx: f64, cy: f64) -> RasterImage {
    let (s, c) = theta.sin_cos();
    RasterImage::from_fn(n, n, |x, y| {
        let d = (x as f64 - cx) * -s + (y as f64 - cy) * c;
        (0.2 + 0.6 * 0.5 * (1.0 + libm::erf(d / std::f64::consts::SQRT_2))) as f32
    })
    .unwrap()
}

fn rotate90(img: &RasterImage) -> RasterImage {
    let n = img.width();
    // new(x, y) = old(n - 1 - y, x): a quarter turn of the pixel grid.
    RasterImage::from_fn(n, n, |x, y| img.get(n - 1 - y, x)).unwrap()
}

fn same_axis(a: ImagePoint, b: ImagePoint) -> f64 {
    a.cross(b).abs()
}

pub fn edgelets() -> Result<(), String> {
    check("eigen", (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64), |(a, b, c)| {
        let (l1, l2, v) = eigen_sym2(a, b, c);
        let m = Matrix2::new(a, b, b, c);
        let oracle = SymmetricEigen::new(m);
        let (mut e1, mut e2) = (oracle.eigenvalues[0], oracle.eigenvalues[1]);
        let mut k = 0;
        if e2 > e1 {
            std::mem::swap(&mut e1, &mut e2);
            k = 1;
        }
        let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
        prop_assert!((l1 - e1).abs() < 1e-9 * scale && (l2 - e2).abs() < 1e-9 * scale);
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        let mv = m * nalgebra::Vector2::new(v.x, v.y);
        prop_assert!((mv - nalgebra::Vector2::new(v.x, v.y) * l1).norm() < 1e-9 * scale);
        if l1 - l2 > 1e-6 * scale {
            let o = oracle.eigenvectors.column(k);
            prop_assert!(same_axis(v, ImagePoint::new(o[0], o[1])) < 1e-6);
        }
        Ok(())
    })?;

    let noise = prop::collection::vec(0.0..1.0f32, 24 * 24);
    check("quarter-turn equivariance", (noise, 5usize..19, 5usize..19), |(px, x, y)| {
        let n = 24;
        let img = RasterImage::new(n, n, px).unwrap();
        let rot = rotate90(&img);
        let e = edgelet_at(&gradient_field(&img), x, y);
        // Old pixel (x, y) lands at (y, n - 1 - x).
        let r = edgelet_at(&gradient_field(&rot), y, n - 1 - x);
        let (e, r): (Edgelet, Edgelet) = match (e, r) {
            (Ok(e), Ok(r)) => (e, r),
            (Err(_), Err(_)) => return Ok(()),
            (a, b) => return Err(TestCaseError::fail(format!("{a:?} vs {b:?}"))),
        };
        let turned = ImagePoint::new(e.direction.y, -e.direction.x);
        prop_assert!((e.quality - r.quality).abs() <= 1e-5 * e.quality, "{} vs {}", e.quality, r.quality);
        if e.quality > 1.01 {
            prop_assert!(same_axis(turned, r.direction) < 1e-5, "{:?} vs {:?}", turned, r.direction);
        }
        Ok(())
    })?;

    check(
        "edge direction",
        (0.0..std::f64::consts::PI, -0.5..0.5f64, -0.5..0.5f64),
        |(theta, ox, oy)| {
            let n = 33;
            let img = edge_image(n, theta, 16.0 + ox, 16.0 + oy);
            let e = edgelet_at(&gradient_field(&img), 16, 16).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let truth = ImagePoint::new(theta.cos(), theta.sin());
            let deg = same_axis(truth, e.direction).asin().to_degrees();
            prop_assert!(deg < 0.5, "edge at {:.3} deg estimated {:.3} deg off", theta.to_degrees(), deg);
            prop_assert!(e.quality > 1.5, "quality {}", e.quality);
            Ok(())
        },
    )
}

// ---- kalman ------------------------------------------------------------

pub fn kalman() -> Result<(), String> {
    let motion = (
        (-500.0..500.0f64, -500.0..500.0f64, 10.0..200.0f64, 10.0..200.0f64),
        (-20.0..20.0f64, -20.0..20.0f64),
        prop::collection::vec(1i64..5, 2..25),
        -100i64..100,
    );
    check("constant velocity", motion, |((x0, y0, w, h), (vx, vy), gaps, f0)| {
        let truth = |f: i64| Measurement::new(x0 + vx * (f - f0) as f64, y0 + vy * (f - f0) as f64, w, h);
        let mut frame = f0;
        let mut filter = BoxFilter::new(truth(frame), frame, KalmanParams::default());
        for (i, g) in gaps.iter().enumerate() {
            frame += g;
            if i > 0 {
                let (x, _) = filter.predicted(frame);
                let z = truth(frame);
                for k in 0..4 {
                    prop_assert!(
                        (x[k] - z[k]).abs() < 1e-8 * (1.0 + z[k].abs()),
                        "predicted {} at frame {}",
                        x,
                        frame
                    );
                }
            }
            filter.update(truth(frame), frame);
            prop_assert!((filter.x[4] - vx).abs() < 1e-9 && (filter.x[5] - vy).abs() < 1e-9);
        }
        Ok(())
    })
}

// ---- iou ---------------------------------------------------------------

fn bbox() -> impl Strategy<Value = BBox> {
    (-500.0..500.0f64, -500.0..500.0f64, 0.5..300.0f64, 0.5..300.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
}

pub fn iou_axioms() -> Result<(), String> {
    let shift = (-100.0..100.0f64, -100.0..100.0f64);
    check("axioms", (bbox(), bbox(), shift, 0.1..10.0f64), |(a, b, (dx, dy), k)| {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        let d = ImagePoint::new(dx, dy);
        prop_assert!((iou(&a.translated(d), &b.translated(d)) - v).abs() < 1e-9);
        let s = |r: &BBox| BBox::new(r.x0 * k, r.y0 * k, r.x1 * k, r.y1 * k);
        prop_assert!((iou(&s(&a), &s(&b)) - v).abs() < 1e-9);
        let far = a.translated(ImagePoint::new(a.width() + b.width() + 1.0 + (b.x0 - a.x0).abs(), 0.0));
        prop_assert_eq!(iou(&far, &b), 0.0);
        // A box inside another: IoU is the ratio of areas.
        let inner = BBox::new(a.x0 + 0.25 * a.width(), a.y0 + 0.25 * a.height(), a.x1 - 0.25 * a.width(), a.y1);
        prop_assert!((iou(&inner, &a) - inner.area() / a.area()).abs() < 1e-12);
        Ok(())
    })
}

// ---- second vanishing point --------------------------------------------

pub fn second_vp() -> Result<(), String> {
    let noise = NoiseSpec {
        marking_sigma_px: 1.5,
        ..NoiseSpec::default()
    };
    let opts = GridOptions {
        spacing: 4.0,
        max_distance: 20.0,
        ..GridOptions::default()
    };
    check(
        "dominance",
        (0u64..1_000_000, prop::collection::vec(0.0..1.0f64, 64)),
        |(seed, picks)| {
            let scene = Scene::new(SceneConfig::sampled(seed, noise), seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let markings = scene.noisy_markings(&scene.markings());
            let size: ImageSize = scene.config.image;
            let lines = |ls: &[[ImagePoint; 2]]| ls.iter().map(|l| Line2::through(l[0], l[1]).unwrap()).collect::<Vec<_>>();
            let vp1 = vp_least_squares(&lines(&markings.lane_lines)).unwrap();
            let v_init = vp_least_squares(&lines(&markings.perpendicular_lines)).unwrap();
            let fit = match optimize_second_vp(vp1, v_init, size, &markings, &opts) {
                Ok(f) => f,
                Err(_) => return Ok(()),
            };
            let grid = second_vp_grid(vp1, v_init, size, &opts).unwrap();
            let independent = second_vp_objective(vp1, fit.vp2, size, &markings).unwrap();
            prop_assert_eq!(independent, fit.objective);
            let mut others: Vec<ImagePoint> = picks
                .iter()
                .map(|&u| grid[((u * grid.len() as f64) as usize).min(grid.len() - 1)])
                .collect();
            let at = grid.iter().position(|&g| g == fit.vp2).expect("optimum is a grid candidate");
            others.extend(grid[at.saturating_sub(3)..(at + 4).min(grid.len())].iter().copied());
            for v in others {
                if let Ok(obj) = second_vp_objective(vp1, v, size, &markings) {
                    prop_assert!(
                        fit.objective <= obj,
                        "candidate {:?} scores {} below the optimum {}",
                        v,
                        obj,
                        fit.objective
                    );
                }
            }
            Ok(())
        },
    )
}

// ---- kde ---------------------------------------------------------------

pub fn kde_weights() -> Result<(), String> {
    let samples = prop::collection::vec((1.0..30.0f64, 0.05..1.0f64), 1..60);
    check("weight scaling", (samples, -3.0..3.0f64), |(s, log_k)| {
        let k = 10f64.powf(log_k);
        let base: Vec<ScaleSample> = s
            .iter()
            .enumerate()
            .map(|(i, &(lambda, score))| ScaleSample {
                instance: i as u64 % 7,
                j: i,
                lambda,
                score,
            })
            .collect();
        let scaled: Vec<ScaleSample> = base.iter().map(|x| ScaleSample { score: x.score * k, ..*x }).collect();
        let a = kde_argmax(&base, None, KDE_POINTS).unwrap();
        let b = kde_argmax(&scaled, None, KDE_POINTS).unwrap();
        prop_assert!(
            (a.lambda - b.lambda).abs() <= 1e-9 * a.lambda,
            "{} vs {} with weights x{}",
            a.lambda,
            b.lambda,
            k
        );
        prop_assert!((a.bandwidth - b.bandwidth).abs() <= 1e-9 * a.bandwidth.max(1e-12));
        let lo = s.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        let hi = s.iter().map(|x| x.0).fold(0.0, f64::max);
        // The mode sits inside the sample range, up to one grid step of refinement.
        let step = a.density[1].0 / a.density[0].0;
        prop_assert!(
            a.lambda >= lo / step && a.lambda <= hi * step,
            "mode {} outside [{}, {}]",
            a.lambda,
            lo,
            hi
        );
        Ok(())
    })
}
