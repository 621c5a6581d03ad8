use super::{arc_length_integral, penalty, penalty_slope, CostContext};
use crate::error::{Error, Result};
use crate::geom::{is_finite, Trajectory, Vec3};
use crate::shot::CostGrad;

/// Penalty of the environment plus the actor, treated as a sphere moving
/// along the forecast, at drone position `q` and time index `k`.
fn collision_penalty(ctx: &CostContext, q: &Vec3, actor: &Vec3) -> (f64, Vec3) {
    let eps = ctx.eps_obs;
    let (d, grad_d) = ctx
        .grid
        .query(q)
        .unwrap_or((ctx.grid.truncation(), Vec3::zeros()));
    let mut value = penalty(d, eps);
    let mut grad = grad_d * penalty_slope(d, eps);

    let rel = q - actor;
    let dist = rel.norm();
    let da = dist - ctx.actor_clearance_radius;
    if da <= eps {
        value += penalty(da, eps);
        if dist > 0.0 {
            grad += rel * (penalty_slope(da, eps) / dist);
        }
    }
    (value, grad)
}

/// Arc-length weighted collision penalty `sum_k w_k c(q_k) |q'_k|`.
pub fn obstacle_cost(xi_q: &Trajectory, ctx: &CostContext) -> Result<CostGrad> {
    xi_q.check_same_grid(&ctx.actor_traj, "obstacle cost")?;
    if !xi_q.waypoints().iter().all(is_finite) {
        return Err(Error::NonFinite("obstacle cost input"));
    }
    let actor = ctx.actor_traj.waypoints();
    let per_point: Vec<(f64, Vec3)> = xi_q
        .waypoints()
        .iter()
        .zip(actor)
        .map(|(q, a)| collision_penalty(ctx, q, a))
        .collect();
    Ok(arc_length_integral(xi_q.waypoints(), xi_q.dt(), ctx.speed_floor, &per_point))
}
