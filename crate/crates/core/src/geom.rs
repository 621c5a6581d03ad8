//! Position-only trajectories on a uniform time grid, plus the discrete
//! differentiation operators shared by the cost functionals.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// World-frame 3-vector. Meters for positions, m/s for velocities.
pub type Vec3 = nalgebra::Vector3<f64>;

pub(crate) fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Waypoints uniformly spaced over `[0, horizon_s]`, waypoint 0 sitting at
/// absolute time `start_time_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    waypoints: Vec<Vec3>,
    horizon_s: f64,
    start_time_s: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec3>, horizon_s: f64, start_time_s: f64) -> Result<Self> {
        if waypoints.len() < 3 {
            return Err(invalid(format!(
                "trajectory needs at least 3 waypoints, got {}",
                waypoints.len()
            )));
        }
        if !(horizon_s.is_finite() && horizon_s > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon_s}")));
        }
        if !start_time_s.is_finite() {
            return Err(Error::NonFinite("trajectory start time"));
        }
        if !waypoints.iter().all(is_finite) {
            return Err(Error::NonFinite("trajectory waypoints"));
        }
        Ok(Self { waypoints, horizon_s, start_time_s })
    }

    /// Samples `f(t)` at the grid times `t = k * dt`, `t` relative to the start.
    pub fn from_fn(
        n: usize,
        horizon_s: f64,
        start_time_s: f64,
        f: impl Fn(f64) -> Vec3,
    ) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("trajectory needs at least 3 waypoints, got {n}")));
        }
        let dt = horizon_s / (n - 1) as f64;
        let pts = (0..n).map(|k| f(k as f64 * dt)).collect();
        Self::new(pts, horizon_s, start_time_s)
    }

    /// Straight segment from `start` moving at constant `velocity`.
    pub fn straight_line(
        start: Vec3,
        velocity: Vec3,
        n: usize,
        horizon_s: f64,
        start_time_s: f64,
    ) -> Result<Self> {
        Self::from_fn(n, horizon_s, start_time_s, |t| start + velocity * t)
    }

    pub fn waypoints(&self) -> &[Vec3] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn horizon_s(&self) -> f64 {
        self.horizon_s
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    pub fn dt(&self) -> f64 {
        self.horizon_s / (self.waypoints.len() - 1) as f64
    }

    /// Absolute time of waypoint `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        self.start_time_s + k as f64 * self.dt()
    }

    pub fn first(&self) -> Vec3 {
        self.waypoints[0]
    }

    pub fn last(&self) -> Vec3 {
        self.waypoints[self.waypoints.len() - 1]
    }

    /// Replaces the waypoints, keeping the time grid. Panics on length change.
    pub(crate) fn with_waypoints(&self, waypoints: Vec<Vec3>) -> Result<Self> {
        assert_eq!(waypoints.len(), self.waypoints.len());
        Self::new(waypoints, self.horizon_s, self.start_time_s)
    }

    /// True when both trajectories live on the same time grid.
    pub fn same_grid(&self, other: &Trajectory) -> bool {
        self.len() == other.len()
            && (self.horizon_s - other.horizon_s).abs() <= 1e-9 * self.horizon_s
            && (self.start_time_s - other.start_time_s).abs() <= 1e-9
    }

    pub(crate) fn check_same_grid(&self, other: &Trajectory, what: &str) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: n {} vs {}, horizon {} vs {}, start {} vs {}",
                self.len(),
                other.len(),
                self.horizon_s,
                other.horizon_s,
                self.start_time_s,
                other.start_time_s
            )))
        }
    }

    /// Piecewise-linear position at time `t_rel` after the start. Beyond the
    /// horizon the last segment is extended linearly.
    pub fn sample(&self, t_rel: f64) -> Vec3 {
        let n = self.len();
        let u = (t_rel / self.dt()).max(0.0);
        let i = (u.floor() as usize).min(n - 2);
        let frac = u - i as f64;
        self.waypoints[i] * (1.0 - frac) + self.waypoints[i + 1] * frac
    }

    /// Velocity of the piecewise-linear interpolant at `t_rel`.
    pub fn segment_velocity(&self, t_rel: f64) -> Vec3 {
        let n = self.len();
        let u = (t_rel / self.dt()).max(0.0);
        let i = (u.floor() as usize).min(n - 2);
        (self.waypoints[i + 1] - self.waypoints[i]) / self.dt()
    }
}

/// Fixed start state of a planning problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub start_position: Vec3,
    pub start_velocity: Vec3,
}

impl BoundaryCondition {
    pub fn new(start_position: Vec3, start_velocity: Vec3) -> Result<Self> {
        if !(is_finite(&start_position) && is_finite(&start_velocity)) {
            return Err(Error::NonFinite("boundary condition"));
        }
        Ok(Self { start_position, start_velocity })
    }

    pub fn at_rest(start_position: Vec3) -> Self {
        Self { start_position, start_velocity: Vec3::zeros() }
    }
}

/// First-derivative stencil at waypoint `k` of an `n`-point grid, in units
/// of `1/dt`. Central in the interior, second-order one-sided at the ends.
pub(crate) fn velocity_stencil(k: usize, n: usize) -> [(usize, f64); 3] {
    debug_assert!(n >= 3 && k < n);
    if k == 0 {
        [(0, -1.5), (1, 2.0), (2, -0.5)]
    } else if k == n - 1 {
        [(n - 1, 1.5), (n - 2, -2.0), (n - 3, 0.5)]
    } else {
        [(k - 1, -0.5), (k + 1, 0.5), (k, 0.0)]
    }
}

/// Second-derivative stencil at waypoint `k`, in units of `1/dt^2`.
/// Endpoints use the four-point one-sided formula when available.
pub(crate) fn acceleration_stencil(k: usize, n: usize) -> Vec<(usize, f64)> {
    debug_assert!(n >= 3 && k < n);
    if k == 0 {
        if n >= 4 {
            vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)]
        } else {
            vec![(0, 1.0), (1, -2.0), (2, 1.0)]
        }
    } else if k == n - 1 {
        if n >= 4 {
            vec![(n - 1, 2.0), (n - 2, -5.0), (n - 3, 4.0), (n - 4, -1.0)]
        } else {
            vec![(n - 1, 1.0), (n - 2, -2.0), (n - 3, 1.0)]
        }
    } else {
        vec![(k - 1, 1.0), (k, -2.0), (k + 1, 1.0)]
    }
}

fn apply_stencil(points: &[Vec3], stencil: &[(usize, f64)], scale: f64) -> Vec3 {
    stencil
        .iter()
        .fold(Vec3::zeros(), |acc, &(i, w)| acc + points[i] * w)
        * scale
}

pub(crate) fn velocities_of(points: &[Vec3], dt: f64) -> Vec<Vec3> {
    let n = points.len();
    (0..n)
        .map(|k| apply_stencil(points, &velocity_stencil(k, n), 1.0 / dt))
        .collect()
}

pub(crate) fn accelerations_of(points: &[Vec3], dt: f64) -> Vec<Vec3> {
    let n = points.len();
    (0..n)
        .map(|k| apply_stencil(points, &acceleration_stencil(k, n), 1.0 / (dt * dt)))
        .collect()
}

/// Per-waypoint velocity estimates in m/s.
pub fn finite_diff_velocity(traj: &Trajectory) -> Result<Vec<Vec3>> {
    if traj.len() < 3 {
        return Err(invalid("finite differences need at least 3 waypoints"));
    }
    Ok(velocities_of(traj.waypoints(), traj.dt()))
}

/// Per-waypoint acceleration estimates in m/s^2.
pub fn finite_diff_acceleration(traj: &Trajectory) -> Result<Vec<Vec3>> {
    if traj.len() < 3 {
        return Err(invalid("finite differences need at least 3 waypoints"));
    }
    Ok(accelerations_of(traj.waypoints(), traj.dt()))
}

/// Resamples `traj` starting `elapsed_s` later over the same horizon. Times
/// past the old horizon continue in a straight line from the old final
/// waypoint at `extend_velocity`.
pub fn time_shift(traj: &Trajectory, elapsed_s: f64, extend_velocity: Vec3) -> Result<Trajectory> {
    if !(elapsed_s >= 0.0 && elapsed_s < traj.horizon_s()) {
        return Err(invalid(format!(
            "elapsed time {elapsed_s} outside [0, {})",
            traj.horizon_s()
        )));
    }
    if !is_finite(&extend_velocity) {
        return Err(Error::NonFinite("extension velocity"));
    }
    let n = traj.len();
    let dt = traj.dt();
    let shift = elapsed_s / dt;
    let last = (n - 1) as f64;
    let pts = traj.waypoints();
    let out = (0..n)
        .map(|k| {
            let u = k as f64 + shift;
            if u >= last - 1e-9 {
                pts[n - 1] + extend_velocity * ((u - last) * dt)
            } else {
                let i = u.floor() as usize;
                let frac = u - i as f64;
                pts[i] * (1.0 - frac) + pts[i + 1] * frac
            }
        })
        .collect();
    Trajectory::new(out, traj.horizon_s(), traj.start_time_s() + elapsed_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(n: usize, dt: f64, v: Vec3) -> Trajectory {
        Trajectory::straight_line(Vec3::zeros(), v, n, dt * (n - 1) as f64, 0.0).unwrap()
    }

    #[test]
    fn rejects_short_or_degenerate_trajectories() {
        assert!(Trajectory::new(vec![Vec3::zeros(); 2], 1.0, 0.0).is_err());
        assert!(Trajectory::new(vec![Vec3::zeros(); 3], 0.0, 0.0).is_err());
        assert!(Trajectory::new(vec![Vec3::new(f64::NAN, 0.0, 0.0); 3], 1.0, 0.0).is_err());
    }

    #[test]
    fn stationary_has_zero_derivatives() {
        let t = Trajectory::new(vec![Vec3::new(1.0, 2.0, 3.0); 7], 3.0, 0.0).unwrap();
        for v in finite_diff_velocity(&t).unwrap() {
            assert_eq!(v, Vec3::zeros());
        }
        for a in finite_diff_acceleration(&t).unwrap() {
            assert_eq!(a, Vec3::zeros());
        }
    }

    #[test]
    fn three_point_uniform_motion() {
        let t = line(3, 1.0, Vec3::x());
        for v in finite_diff_velocity(&t).unwrap() {
            assert_relative_eq!(v, Vec3::x(), epsilon = 1e-12);
        }
        for a in finite_diff_acceleration(&t).unwrap() {
            assert_relative_eq!(a, Vec3::zeros(), epsilon = 1e-12);
        }
    }

    #[test]
    fn parabola_derivatives() {
        // p(t) = (t^2, 0, 0) sampled at dt = 0.1 over [0, 1]
        let t = Trajectory::from_fn(11, 1.0, 0.0, |s| Vec3::new(s * s, 0.0, 0.0)).unwrap();
        let v = finite_diff_velocity(&t).unwrap();
        let a = finite_diff_acceleration(&t).unwrap();
        assert_relative_eq!(v[5], Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-2);
        for k in 0..11 {
            assert_relative_eq!(v[k].x, 2.0 * k as f64 * 0.1, epsilon = 1e-9);
            assert_relative_eq!(a[k].x, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let t = Trajectory::from_fn(9, 4.0, 1.0, |s| Vec3::new(s.sin(), s * s, 1.0)).unwrap();
        let s = time_shift(&t, 0.0, Vec3::new(5.0, 5.0, 5.0)).unwrap();
        assert_eq!(s.waypoints(), t.waypoints());
        assert_eq!(s.start_time_s(), t.start_time_s());
    }

    #[test]
    fn shift_of_line_is_same_line() {
        let v = Vec3::new(1.0, -2.0, 0.5);
        let t = line(51, 0.2, v);
        for elapsed in [0.05, 0.2, 0.33, 3.7, 9.9] {
            let s = time_shift(&t, elapsed, v).unwrap();
            for (k, p) in s.waypoints().iter().enumerate() {
                let expected = v * (elapsed + k as f64 * 0.2);
                assert_relative_eq!(*p, expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn shift_resample_indices() {
        // n = 51 over 10 s, elapsed one step: waypoints 0..=48 come from
        // interpolation, 49 lands on the old final sample, 50 is extrapolated.
        let t = Trajectory::from_fn(51, 10.0, 0.0, |s| Vec3::new(s * s, 0.0, 0.0)).unwrap();
        let ext = Vec3::new(0.0, 3.0, 0.0);
        let s = time_shift(&t, 0.2, ext).unwrap();
        for k in 0..49 {
            assert_relative_eq!(s.waypoints()[k], t.waypoints()[k + 1], epsilon = 1e-12);
        }
        assert_relative_eq!(s.waypoints()[49], t.last(), epsilon = 1e-12);
        assert_relative_eq!(s.waypoints()[50], t.last() + ext * 0.2, epsilon = 1e-12);
        assert_eq!(s.len(), 51);
        assert_relative_eq!(s.dt(), t.dt());
    }

    #[test]
    fn shift_rejects_out_of_range() {
        let t = line(5, 1.0, Vec3::x());
        assert!(time_shift(&t, 4.0, Vec3::zeros()).is_err());
        assert!(time_shift(&t, -0.1, Vec3::zeros()).is_err());
    }
}
