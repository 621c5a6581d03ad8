use super::{arc_length_integral, penalty, penalty_slope, trapezoid_weight, CostContext};
use crate::error::{Error, Result};
use crate::geom::{accelerations_of, is_finite, velocities_of, Trajectory, Vec3};
use crate::shot::CostGrad;

/// Penalty integrated along the segment from camera `q` to actor `a`:
/// `F = sum_j c(p(tau_j)) |a - q| dtau` with midpoint nodes `tau_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sightline {
    pub value: f64,
    /// dF/dq
    pub grad_q: Vec3,
    /// dF/da
    pub grad_a: Vec3,
}

pub(crate) fn sightline(ctx: &CostContext, q: &Vec3, a: &Vec3) -> Sightline {
    let m = ctx.tau_samples;
    let dtau = 1.0 / m as f64;
    let l = a - q;
    let len = l.norm();
    let l_hat = if len > 0.0 { l / len } else { Vec3::zeros() };
    let mut out = Sightline { value: 0.0, grad_q: Vec3::zeros(), grad_a: Vec3::zeros() };
    for j in 0..m {
        let tau = (j as f64 + 0.5) * dtau;
        let p = q + l * tau;
        let Some((d, grad_d)) = ctx.grid.query(&p) else {
            continue;
        };
        if d > ctx.eps_obs {
            continue;
        }
        let c = penalty(d, ctx.eps_obs);
        let grad_c = grad_d * penalty_slope(d, ctx.eps_obs);
        out.value += c * len * dtau;
        out.grad_q += (grad_c * ((1.0 - tau) * len) - l_hat * c) * dtau;
        out.grad_a += (grad_c * (tau * len) + l_hat * c) * dtau;
    }
    out
}

fn check_inputs(xi_q: &Trajectory, ctx: &CostContext) -> Result<()> {
    xi_q.check_same_grid(&ctx.actor_traj, "occlusion cost")?;
    if !xi_q.waypoints().iter().all(is_finite) {
        return Err(Error::NonFinite("occlusion cost input"));
    }
    Ok(())
}

fn sightlines(xi_q: &Trajectory, ctx: &CostContext) -> Vec<Sightline> {
    let q = xi_q.waypoints();
    let a = ctx.actor_traj.waypoints();
    ctx.execution.map(q.len(), |k| sightline(ctx, &q[k], &a[k]))
}

pub(crate) fn occlusion_cost_grad(xi_q: &Trajectory, ctx: &CostContext) -> Result<CostGrad> {
    check_inputs(xi_q, ctx)?;
    let per_point: Vec<(f64, Vec3)> = sightlines(xi_q, ctx)
        .into_iter()
        .map(|s| (s.value, s.grad_q))
        .collect();
    Ok(arc_length_integral(xi_q.waypoints(), xi_q.dt(), ctx.speed_floor, &per_point))
}

/// Penalty integrated over the ruled surface between the camera and actor
/// trajectories, weighted by camera arc length.
pub fn occlusion_cost(xi_q: &Trajectory, ctx: &CostContext) -> Result<f64> {
    Ok(occlusion_cost_grad(xi_q, ctx)?.value)
}

/// Exact gradient of [`occlusion_cost`] on the waypoint grid.
pub fn occlusion_gradient(xi_q: &Trajectory, ctx: &CostContext) -> Result<Vec<Vec3>> {
    Ok(occlusion_cost_grad(xi_q, ctx)?.gradient)
}

/// Pointwise functional gradient of the occlusion cost, expanded term by term:
///
/// ```text
/// int_0^1  |L||q'| [ (1-tau)(I - u u^T) grad c  -  tau u (a' . grad c) / |q'| ]
///        - c |q'| [ L^ + u (L^ . L') / |q'| + |L| kappa ]  dtau
/// ```
///
/// with `u = q'/|q'|`, `L = a - q`, `L' = a' - q'` and
/// `kappa = (I - u u^T) q'' / |q'|^2`, scaled by the trapezoid weights. It
/// agrees with [`occlusion_gradient`] as the grid is refined but drops the
/// boundary terms at the two ends, so it is not used by the optimizer.
pub fn occlusion_functional_gradient(xi_q: &Trajectory, ctx: &CostContext) -> Result<Vec<Vec3>> {
    check_inputs(xi_q, ctx)?;
    let n = xi_q.len();
    let dt = xi_q.dt();
    let q = xi_q.waypoints();
    let a = ctx.actor_traj.waypoints();
    let qd = velocities_of(q, dt);
    let qdd = accelerations_of(q, dt);
    let ad = velocities_of(a, dt);
    let m = ctx.tau_samples;
    let dtau = 1.0 / m as f64;
    let eps = ctx.eps_obs;
    Ok((0..n)
        .map(|k| {
            let speed = qd[k].norm().max(ctx.speed_floor);
            let u = qd[k] / speed;
            let kappa = (qdd[k] - u * u.dot(&qdd[k])) / (speed * speed);
            let l = a[k] - q[k];
            let len = l.norm();
            let l_hat = if len > 0.0 { l / len } else { Vec3::zeros() };
            let l_dot = ad[k] - qd[k];
            let mut g = Vec3::zeros();
            for j in 0..m {
                let tau = (j as f64 + 0.5) * dtau;
                let Some((d, grad_d)) = ctx.grid.query(&(q[k] + l * tau)) else {
                    continue;
                };
                if d > eps {
                    continue;
                }
                let c = penalty(d, eps);
                let grad_c = grad_d * penalty_slope(d, eps);
                let lever = (grad_c - u * u.dot(&grad_c)) * (1.0 - tau)
                    - u * (tau * ad[k].dot(&grad_c) / speed);
                let stretch = l_hat + u * (l_hat.dot(&l_dot) / speed) + kappa * len;
                g += (lever * (len * speed) - stretch * (c * speed)) * dtau;
            }
            g * trapezoid_weight(k, n, dt)
        })
        .collect())
}
