//! Shot parameters, the ideal viewpoint trajectory they define, and the
//! quadratic shot-quality cost.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{Trajectory, Vec3};

/// Camera placement relative to the actor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotSpec {
    /// Camera to actor distance, m.
    pub distance_rho: f64,
    /// Line-of-action angle from the actor heading, rad in [0, 2pi].
    pub phi_rel: f64,
    /// Elevation above the actor's horizontal plane, rad in [-pi/2, pi/2].
    pub theta_rel: f64,
    /// Target image position of the actor, each in [0, 1].
    #[serde(default = "centered")]
    pub screen_pos: (f64, f64),
}

fn centered() -> (f64, f64) {
    (0.5, 0.5)
}

impl ShotSpec {
    pub fn new(distance_rho: f64, phi_rel: f64, theta_rel: f64) -> Result<Self> {
        let s = Self { distance_rho, phi_rel, theta_rel, screen_pos: centered() };
        s.validate()?;
        Ok(s)
    }

    pub fn with_screen_pos(mut self, sp_x: f64, sp_y: f64) -> Result<Self> {
        self.screen_pos = (sp_x, sp_y);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_rho.is_finite() && self.distance_rho > 0.0) {
            return Err(invalid(format!("shot distance must be positive, got {}", self.distance_rho)));
        }
        if !(0.0..=TAU).contains(&self.phi_rel) {
            return Err(invalid(format!("phi_rel {} outside [0, 2pi]", self.phi_rel)));
        }
        if !(-FRAC_PI_2..=FRAC_PI_2).contains(&self.theta_rel) {
            return Err(invalid(format!("theta_rel {} outside [-pi/2, pi/2]", self.theta_rel)));
        }
        let (x, y) = self.screen_pos;
        if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
            return Err(invalid(format!("screen position ({x}, {y}) outside [0, 1]^2")));
        }
        Ok(())
    }

    /// Camera offset from the actor for an actor heading of `heading`.
    pub fn offset(&self, heading: f64) -> Vec3 {
        let yaw = heading + self.phi_rel;
        let (st, ct) = self.theta_rel.sin_cos();
        Vec3::new(yaw.cos() * ct, yaw.sin() * ct, st) * self.distance_rho
    }
}

/// Keyframed shot parameters, linearly interpolated in absolute time.
/// `phi_rel` is interpolated without wrapping, so keyframes 0 and 2pi
/// describe a full orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSchedule {
    keyframes: Vec<(f64, ShotSpec)>,
}

impl ShotSchedule {
    pub fn new(keyframes: Vec<(f64, ShotSpec)>) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(invalid("shot schedule needs at least one keyframe"));
        }
        for w in keyframes.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(invalid("shot keyframe times must be strictly increasing"));
            }
        }
        for (t, s) in &keyframes {
            if !t.is_finite() {
                return Err(Error::NonFinite("keyframe time"));
            }
            s.validate()?;
        }
        Ok(Self { keyframes })
    }

    pub fn fixed(spec: ShotSpec) -> Self {
        Self { keyframes: vec![(0.0, spec)] }
    }

    pub fn keyframes(&self) -> &[(f64, ShotSpec)] {
        &self.keyframes
    }

    /// Parameters in force at absolute time `t`, held constant outside the
    /// keyframe span.
    pub fn at(&self, t: f64) -> ShotSpec {
        let kf = &self.keyframes;
        if t <= kf[0].0 {
            return kf[0].1;
        }
        let last = kf[kf.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let i = kf.partition_point(|(kt, _)| *kt <= t) - 1;
        let ((t0, a), (t1, b)) = (kf[i], kf[i + 1]);
        let w = (t - t0) / (t1 - t0);
        let lerp = |x: f64, y: f64| x + (y - x) * w;
        ShotSpec {
            distance_rho: lerp(a.distance_rho, b.distance_rho),
            phi_rel: lerp(a.phi_rel, b.phi_rel),
            theta_rel: lerp(a.theta_rel, b.theta_rel),
            screen_pos: (lerp(a.screen_pos.0, b.screen_pos.0), lerp(a.screen_pos.1, b.screen_pos.1)),
        }
    }
}

/// Pinhole camera distance at which an actor of `actor_height_m` spans the
/// fraction `ss` of the vertical field of view.
pub fn shot_scale_to_distance(ss: f64, actor_height_m: f64, vertical_fov: f64) -> Result<f64> {
    if !(ss > 0.0 && ss <= 1.0) {
        return Err(invalid(format!("shot scale must be in (0, 1], got {ss}")));
    }
    if !(vertical_fov > 0.0 && vertical_fov < std::f64::consts::PI) {
        return Err(invalid(format!("vertical fov must be in (0, pi), got {vertical_fov}")));
    }
    if !(actor_height_m > 0.0) {
        return Err(invalid("actor height must be positive"));
    }
    Ok(actor_height_m / (2.0 * ss * (vertical_fov / 2.0).tan()))
}

/// Places the camera on the sphere around each forecast actor position.
pub fn ideal_shot_trajectory(
    actor: &Trajectory,
    headings: &[f64],
    schedule: &ShotSchedule,
) -> Result<Trajectory> {
    if headings.len() != actor.len() {
        return Err(Error::GridMismatch(format!(
            "{} headings for {} actor waypoints",
            headings.len(),
            actor.len()
        )));
    }
    let pts = actor
        .waypoints()
        .iter()
        .zip(headings)
        .enumerate()
        .map(|(k, (a, &h))| a + schedule.at(actor.time_at(k)).offset(h))
        .collect();
    actor.with_waypoints(pts)
}

/// Value and per-waypoint gradient of a cost functional.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGrad {
    pub value: f64,
    pub gradient: Vec<Vec3>,
}

impl CostGrad {
    pub fn zero(n: usize) -> Self {
        Self { value: 0.0, gradient: vec![Vec3::zeros(); n] }
    }
}

/// Mean squared distance to the ideal trajectory over the free waypoints
/// (waypoint 0 is the fixed start):
/// `J = 1/(2(n-1)) * sum_{k>=1} |q_k - s_k|^2`, gradient `(q_k - s_k)/(n-1)`.
pub fn shot_cost(xi_q: &Trajectory, xi_shot: &Trajectory) -> Result<CostGrad> {
    xi_q.check_same_grid(xi_shot, "shot cost")?;
    let n = xi_q.len();
    let scale = 1.0 / (n - 1) as f64;
    let mut out = CostGrad::zero(n);
    for k in 1..n {
        let d = xi_q.waypoints()[k] - xi_shot.waypoints()[k];
        out.value += 0.5 * scale * d.norm_squared();
        out.gradient[k] = d * scale;
    }
    Ok(out)
}
