//! Constant-velocity Kalman filter for the actor and its straight-line forecast.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Matrix6x3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{is_finite, Trajectory, Vec3};

/// Below this horizontal speed the heading estimate is held.
pub const HEADING_SPEED_GATE: f64 = 0.3;

pub type Covariance6 = Matrix6<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// White-acceleration process noise, m/s^2.
    pub process_accel_std: f64,
    /// Position measurement noise, m.
    pub measurement_pos_std: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { process_accel_std: 1.0, measurement_pos_std: 1.0 }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.process_accel_std > 0.0 && self.measurement_pos_std > 0.0) {
            return Err(invalid("noise standard deviations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Joint covariance of `[position, velocity]`.
    pub covariance: Covariance6,
    /// Yaw in (-pi, pi].
    pub heading: f64,
    pub last_update_s: f64,
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

impl ActorState {
    pub fn new(
        position: Vec3,
        velocity: Vec3,
        covariance: Covariance6,
        heading: f64,
        last_update_s: f64,
    ) -> Result<Self> {
        let s = Self {
            position,
            velocity,
            covariance: (covariance + covariance.transpose()) * 0.5,
            heading: normalize_angle(heading),
            last_update_s,
        };
        s.check_finite()?;
        Ok(s)
    }

    /// Filter initialized from a single position fix: velocity unknown.
    pub fn from_first_fix(
        position: Vec3,
        heading: f64,
        time_s: f64,
        noise: &NoiseParams,
        velocity_std: f64,
    ) -> Result<Self> {
        let mut cov = Covariance6::zeros();
        let pv = noise.measurement_pos_std.powi(2);
        let vv = velocity_std.powi(2);
        for a in 0..3 {
            cov[(a, a)] = pv;
            cov[(a + 3, a + 3)] = vv;
        }
        Self::new(position, Vec3::zeros(), cov, heading, time_s)
    }

    fn check_finite(&self) -> Result<()> {
        let ok = is_finite(&self.position)
            && is_finite(&self.velocity)
            && self.covariance.iter().all(|c| c.is_finite())
            && self.heading.is_finite()
            && self.last_update_s.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("actor state"))
        }
    }

    fn mean(&self) -> nalgebra::Vector6<f64> {
        nalgebra::Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    fn heading_from_velocity(&self) -> f64 {
        let horizontal = self.velocity.xy().norm();
        if horizontal > HEADING_SPEED_GATE {
            normalize_angle(self.velocity.y.atan2(self.velocity.x))
        } else {
            self.heading
        }
    }
}

fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for a in 0..3 {
        f[(a, a + 3)] = dt;
    }
    f
}

fn process_noise(dt: f64, accel_std: f64) -> Matrix6<f64> {
    let q = accel_std * accel_std;
    let (pp, pv, vv) = (dt.powi(4) / 4.0 * q, dt.powi(3) / 2.0 * q, dt * dt * q);
    let mut m = Matrix6::zeros();
    for a in 0..3 {
        m[(a, a)] = pp;
        m[(a, a + 3)] = pv;
        m[(a + 3, a)] = pv;
        m[(a + 3, a + 3)] = vv;
    }
    m
}

/// Propagates the state `dt` seconds ahead.
pub fn kf_predict(state: &ActorState, dt: f64, noise: &NoiseParams) -> Result<ActorState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("prediction step must be positive, got {dt}")));
    }
    state.check_finite()?;
    let f = transition(dt);
    let p = f * state.covariance * f.transpose() + process_noise(dt, noise.process_accel_std);
    ActorState::new(
        state.position + state.velocity * dt,
        state.velocity,
        p,
        state.heading,
        state.last_update_s + dt,
    )
}

/// Fuses a position measurement taken at the state's time.
pub fn kf_update(state: &ActorState, measured: Vec3, noise: &NoiseParams) -> Result<ActorState> {
    if !is_finite(&measured) {
        return Err(Error::NonFinite("actor measurement"));
    }
    state.check_finite()?;
    let h = Matrix3x6::<f64>::identity();
    let r = Matrix3::identity() * noise.measurement_pos_std.powi(2);
    let p = state.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| invalid("innovation covariance is singular"))?;
    let k: Matrix6x3<f64> = p * h.transpose() * s_inv;
    let innovation = measured - state.position;
    let x = state.mean() + k * innovation;
    // Joseph form keeps the covariance symmetric PSD
    let ikh = Matrix6::identity() - k * h;
    let p_new = ikh * p * ikh.transpose() + k * r * k.transpose();
    let mut out = ActorState::new(
        x.fixed_rows::<3>(0).into_owned(),
        x.fixed_rows::<3>(3).into_owned(),
        p_new,
        state.heading,
        state.last_update_s,
    )?;
    out.heading = out.heading_from_velocity();
    Ok(out)
}

/// Constant-velocity forecast on the planner grid, with a constant heading
/// schedule.
pub fn forecast_actor(state: &ActorState, horizon_s: f64, n: usize) -> Result<(Trajectory, Vec<f64>)> {
    state.check_finite()?;
    let traj = Trajectory::straight_line(state.position, state.velocity, n, horizon_s, state.last_update_s)?;
    Ok((traj, vec![state.heading; n]))
}

/// One timestamped actor position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub time_s: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Measurement {
    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Reads a `time_s,x,y,z` CSV of actor fixes, requiring increasing times.
pub fn read_measurements(path: impl AsRef<Path>) -> Result<Vec<Measurement>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out: Vec<Measurement> = Vec::new();
    for row in rdr.deserialize() {
        let m: Measurement = row?;
        if !(m.time_s.is_finite() && is_finite(&m.position())) {
            return Err(Error::NonFinite("measurement row"));
        }
        if let Some(prev) = out.last() {
            if m.time_s <= prev.time_s {
                return Err(invalid(format!(
                    "measurement times must increase ({} after {})",
                    m.time_s, prev.time_s
                )));
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Runs the filter over a measurement stream, returning the state after each fix.
pub fn filter_measurements(
    measurements: &[Measurement],
    noise: &NoiseParams,
    initial_heading: f64,
) -> Result<Vec<ActorState>> {
    let Some(first) = measurements.first() else {
        return Ok(Vec::new());
    };
    let mut state =
        ActorState::from_first_fix(first.position(), initial_heading, first.time_s, noise, 5.0)?;
    let mut out = vec![state];
    for m in &measurements[1..] {
        state = kf_predict(&state, m.time_s - state.last_update_s, noise)?;
        state = kf_update(&state, m.position(), noise)?;
        out.push(state);
    }
    Ok(out)
}
