//! Constant-velocity Kalman filter on 2D boxes.
//!
//! State `[cx, cy, w, h, vx, vy]` in pixels and pixels per frame; the
//! measurement is `[cx, cy, w, h]`. A filter is created from one box with
//! unknown velocity and re-initialized exactly from the first two boxes, so
//! noise-free constant-velocity input is reproduced from the second step on.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

pub type State = SVector<f64, 6>;
pub type Covariance = SMatrix<f64, 6, 6>;
pub type Measurement = SVector<f64, 4>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    /// Measurement noise, pixels.
    pub measurement_sigma: f64,
    /// White acceleration noise, pixels per frame².
    pub acceleration_sigma: f64,
    /// Prior velocity uncertainty before the second detection, pixels per frame.
    pub initial_velocity_sigma: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            measurement_sigma: 1.0,
            acceleration_sigma: 4.0,
            initial_velocity_sigma: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxFilter {
    pub x: State,
    pub p: Covariance,
    params: KalmanParams,
    updates: usize,
    last_measurement: Measurement,
    last_frame: i64,
}

impl BoxFilter {
    pub fn new(z: Measurement, frame: i64, params: KalmanParams) -> Self {
        let x = State::new(z[0], z[1], z[2], z[3], 0.0, 0.0);
        let r2 = params.measurement_sigma.powi(2);
        let v2 = params.initial_velocity_sigma.powi(2);
        let p = Covariance::from_diagonal(&State::new(r2, r2, r2, r2, v2, v2));
        Self {
            x,
            p,
            params,
            updates: 1,
            last_measurement: z,
            last_frame: frame,
        }
    }

    pub fn last_frame(&self) -> i64 {
        self.last_frame
    }

    fn transition(dt: f64) -> Covariance {
        let mut f = Covariance::identity();
        f[(0, 4)] = dt;
        f[(1, 5)] = dt;
        f
    }

    fn process_noise(&self, dt: f64) -> Covariance {
        let q = self.params.acceleration_sigma.powi(2);
        let mut m = Covariance::zeros();
        for (p, v) in [(0, 4), (1, 5)] {
            m[(p, p)] = q * dt.powi(4) / 4.0;
            m[(p, v)] = q * dt.powi(3) / 2.0;
            m[(v, p)] = q * dt.powi(3) / 2.0;
            m[(v, v)] = q * dt * dt;
        }
        m[(2, 2)] = q * dt * dt;
        m[(3, 3)] = q * dt * dt;
        m
    }

    /// State and covariance predicted to `frame` without modifying the filter.
    pub fn predicted(&self, frame: i64) -> (State, Covariance) {
        let dt = (frame - self.last_frame) as f64;
        let f = Self::transition(dt);
        (f * self.x, f * self.p * f.transpose() + self.process_noise(dt))
    }

    /// Innovation covariance of the predicted measurement.
    pub fn innovation_covariance(&self, p: &Covariance) -> SMatrix<f64, 4, 4> {
        let r2 = self.params.measurement_sigma.powi(2);
        p.fixed_view::<4, 4>(0, 0).into_owned() + SMatrix::<f64, 4, 4>::identity() * r2
    }

    /// Predict to `frame` and correct with `z`.
    pub fn update(&mut self, z: Measurement, frame: i64) {
        let dt = (frame - self.last_frame) as f64;
        if self.updates == 1 && dt > 0.0 {
            // Two-point initialization: velocity from the first two boxes.
            let v = (z - self.last_measurement) / dt;
            self.x = State::new(z[0], z[1], z[2], z[3], v[0], v[1]);
            let r2 = self.params.measurement_sigma.powi(2);
            let vv = 2.0 * r2 / (dt * dt);
            let mut p = Covariance::from_diagonal(&State::new(r2, r2, r2, r2, vv, vv));
            p[(0, 4)] = r2 / dt;
            p[(4, 0)] = r2 / dt;
            p[(1, 5)] = r2 / dt;
            p[(5, 1)] = r2 / dt;
            self.p = p;
        } else {
            let (x, p) = self.predicted(frame);
            let s = self.innovation_covariance(&p);
            let pht = p.fixed_view::<6, 4>(0, 0).into_owned();
            let k = match s.try_inverse() {
                Some(si) => pht * si,
                None => SMatrix::<f64, 6, 4>::zeros(),
            };
            let innovation = z - x.fixed_rows::<4>(0);
            self.x = x + k * innovation;
            let mut kh = Covariance::zeros();
            kh.fixed_view_mut::<6, 4>(0, 0).copy_from(&k);
            self.p = (Covariance::identity() - kh) * p;
        }
        self.updates += 1;
        self.last_measurement = z;
        self.last_frame = frame;
    }
}
