//! Cost functionals over the waypoint grid and their weighted sum.
//!
//! Obstacle and occlusion costs are arc-length integrals `sum_k w_k f(q_k) |v_k|`
//! with trapezoid weights `w_k` and the velocity stencils of [`crate::geom`].
//! Their gradients are the exact derivatives of those sums, i.e. the
//! functional gradient `|q'| grad f - d/dt (f q'/|q'|)` with the time
//! derivative taken by the adjoint of the velocity stencil.

mod obstacle;
mod occlusion;
mod smooth;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use obstacle::obstacle_cost;
pub use occlusion::{occlusion_cost, occlusion_functional_gradient, occlusion_gradient};
pub use smooth::{build_smoothness, SmoothnessOperator};

use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::geom::{velocity_stencil, Trajectory, Vec3};
use crate::shot::{shot_cost, CostGrad};
use crate::tsdf::TsdfGrid;

/// Smooth hinge on signed distance: linear inside obstacles, quadratic in the
/// band `[0, eps]`, zero beyond.
pub fn penalty(d: f64, eps: f64) -> f64 {
    if d < 0.0 {
        -d + 0.5 * eps
    } else if d <= eps {
        let e = d - eps;
        e * e / (2.0 * eps)
    } else {
        0.0
    }
}

/// Derivative of [`penalty`] with respect to the distance.
pub fn penalty_slope(d: f64, eps: f64) -> f64 {
    if d < 0.0 {
        -1.0
    } else if d <= eps {
        (d - eps) / eps
    } else {
        0.0
    }
}

/// Term weights of the total cost; smoothness has unit weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// Obstacle weight.
    pub lambda1: f64,
    /// Occlusion weight.
    pub lambda2: f64,
    /// Shot-quality weight.
    pub lambda3: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { lambda1: 10.0, lambda2: 1.0, lambda3: 5.0 }
    }
}

/// Speed below which unit-velocity directions are damped.
pub const DEFAULT_SPEED_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CostContext {
    pub weights: Weights,
    /// Hinge width of the penalty, m.
    pub eps_obs: f64,
    /// Radius of the sphere the actor is treated as, m.
    pub actor_clearance_radius: f64,
    /// Midpoint-rule nodes along each camera-actor segment.
    pub tau_samples: usize,
    pub speed_floor: f64,
    pub grid: Arc<TsdfGrid>,
    pub actor_traj: Trajectory,
    pub execution: Execution,
}

impl CostContext {
    pub fn new(grid: Arc<TsdfGrid>, actor_traj: Trajectory) -> Self {
        Self {
            weights: Weights::default(),
            eps_obs: 2.0,
            actor_clearance_radius: 1.0,
            tau_samples: 16,
            speed_floor: DEFAULT_SPEED_FLOOR,
            grid,
            actor_traj,
            execution: Execution::Sequential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if [w.lambda1, w.lambda2, w.lambda3].iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(invalid("cost weights must be non-negative"));
        }
        if !(self.eps_obs > 0.0) {
            return Err(invalid("eps_obs must be positive"));
        }
        if self.tau_samples < 2 {
            return Err(invalid("tau_samples must be at least 2"));
        }
        if !(self.actor_clearance_radius >= 0.0) {
            return Err(invalid("actor clearance radius must be non-negative"));
        }
        if !(self.speed_floor > 0.0) {
            return Err(invalid("speed floor must be positive"));
        }
        Ok(())
    }
}

/// Trapezoid quadrature weight of waypoint `k`.
pub(crate) fn trapezoid_weight(k: usize, n: usize, dt: f64) -> f64 {
    if k == 0 || k == n - 1 {
        0.5 * dt
    } else {
        dt
    }
}

/// Smoothed speed `sqrt(|v|^2 + f^2) - f` and its gradient with respect to `v`.
pub(crate) fn smoothed_speed(v: &Vec3, floor: f64) -> (f64, Vec3) {
    let r = (v.norm_squared() + floor * floor).sqrt();
    (r - floor, v / r)
}

/// Assembles `sum_k w_k f_k s(v_k)` and its gradient from per-waypoint values
/// `f_k` and spatial gradients `grad f_k`.
pub(crate) fn arc_length_integral(
    points: &[Vec3],
    dt: f64,
    floor: f64,
    per_point: &[(f64, Vec3)],
) -> CostGrad {
    let n = points.len();
    let velocities = crate::geom::velocities_of(points, dt);
    let mut out = CostGrad::zero(n);
    for k in 0..n {
        let (f, grad_f) = per_point[k];
        if f == 0.0 && grad_f == Vec3::zeros() {
            continue;
        }
        let w = trapezoid_weight(k, n, dt);
        let (speed, dspeed) = smoothed_speed(&velocities[k], floor);
        out.value += w * f * speed;
        out.gradient[k] += grad_f * (w * speed);
        if f != 0.0 {
            let transport = dspeed * (w * f / dt);
            for (j, s) in velocity_stencil(k, n) {
                out.gradient[j] += transport * s;
            }
        }
    }
    out
}

/// Raw (unweighted) value of every term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub smooth: f64,
    pub obstacle: f64,
    pub occlusion: f64,
    pub shot: f64,
    pub total: f64,
}

/// Weighted total cost and gradient. Terms with zero weight are skipped and
/// reported as zero.
pub fn total_cost(
    xi_q: &Trajectory,
    ctx: &CostContext,
    smooth: &SmoothnessOperator,
    xi_shot: &Trajectory,
) -> Result<(CostBreakdown, Vec<Vec3>)> {
    let w = ctx.weights;
    let s = smooth.evaluate(xi_q)?;
    let n = xi_q.len();
    let obs = if w.lambda1 > 0.0 { obstacle_cost(xi_q, ctx)? } else { CostGrad::zero(n) };
    let occ = if w.lambda2 > 0.0 {
        occlusion::occlusion_cost_grad(xi_q, ctx)?
    } else {
        CostGrad::zero(n)
    };
    let shot = if w.lambda3 > 0.0 { shot_cost(xi_q, xi_shot)? } else { CostGrad::zero(n) };
    let gradient = (0..n)
        .map(|k| {
            s.gradient[k]
                + obs.gradient[k] * w.lambda1
                + occ.gradient[k] * w.lambda2
                + shot.gradient[k] * w.lambda3
        })
        .collect();
    let b = CostBreakdown {
        smooth: s.value,
        obstacle: obs.value,
        occlusion: occ.value,
        shot: shot.value,
        total: s.value + w.lambda1 * obs.value + w.lambda2 * occ.value + w.lambda3 * shot.value,
    };
    Ok((b, gradient))
}

/// Every term evaluated regardless of weight, for reporting.
pub fn cost_breakdown(
    xi_q: &Trajectory,
    ctx: &CostContext,
    smooth: &SmoothnessOperator,
    xi_shot: &Trajectory,
) -> Result<CostBreakdown> {
    let w = ctx.weights;
    let smooth = smooth.evaluate(xi_q)?.value;
    let obstacle = obstacle_cost(xi_q, ctx)?.value;
    let occlusion = occlusion_cost(xi_q, ctx)?;
    let shot = shot_cost(xi_q, xi_shot)?.value;
    Ok(CostBreakdown {
        smooth,
        obstacle,
        occlusion,
        shot,
        total: smooth + w.lambda1 * obstacle + w.lambda2 * occlusion + w.lambda3 * shot,
    })
}
