//! Covariant gradient descent over the free waypoints.
//!
//! The metric is the Hessian of the quadratic terms,
//! `M = (A_smooth + lambda3 * A_shot) / (n - 1)`, factored once per problem.
//! Each step is `xi <- xi - M^-1 grad J / eta`; with only quadratic terms and
//! `eta = 1` that is an exact Newton step. Obstacle and occlusion curvature
//! is not in the metric, so a step that raises the cost is halved.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::costs::{total_cost, CostBreakdown, CostContext, SmoothnessOperator};
use crate::error::{invalid, Error, Result};
use crate::geom::{is_finite, time_shift, BoundaryCondition, Trajectory, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptParams {
    /// Step divisor; larger is more conservative.
    pub eta: f64,
    /// Stop when `(g^T M^-1 g)^2 / 2` drops below this.
    pub eps0: f64,
    /// Stop when an iteration lowers the cost by less than this.
    pub eps1: f64,
    pub i_max: usize,
}

impl Default for OptParams {
    fn default() -> Self {
        Self { eta: 2.0, eps0: 1e-6, eps1: 1e-6, i_max: 50 }
    }
}

impl OptParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta must be positive"));
        }
        if !(self.eps0 >= 0.0 && self.eps1 >= 0.0) {
            return Err(invalid("stopping tolerances must be non-negative"));
        }
        if self.i_max < 1 {
            return Err(invalid("i_max must be at least 1"));
        }
        Ok(())
    }
}

/// Factored metric over the free waypoints `1..n`.
#[derive(Debug, Clone)]
pub struct Metric {
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

pub fn build_metric(smooth: &SmoothnessOperator, lambda3: f64) -> Result<Metric> {
    if !(lambda3 >= 0.0 && lambda3.is_finite()) {
        return Err(invalid("lambda3 must be non-negative"));
    }
    let n = smooth.n();
    let free = n - 1;
    let scale = 1.0 / free as f64;
    let mut m = smooth.a().view((1, 1), (free, free)).into_owned();
    for i in 0..free {
        m[(i, i)] += lambda3;
    }
    m *= scale;
    let factor = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
    Ok(Metric { matrix: m, factor })
}

impl Metric {
    /// The `(n-1) x (n-1)` free-waypoint block.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows() + 1
    }

    /// Solves `M x = g` on the free rows; row 0 of the result is zero.
    pub fn solve(&self, g: &[Vec3]) -> Vec<Vec3> {
        let free = self.matrix.nrows();
        assert_eq!(g.len(), free + 1, "gradient length does not match the metric");
        let rhs = DMatrix::from_fn(free, 3, |i, a| g[i + 1][a]);
        let x = self.factor.solve(&rhs);
        std::iter::once(Vec3::zeros())
            .chain((0..free).map(|i| Vec3::new(x[(i, 0)], x[(i, 1)], x[(i, 2)])))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTol,
    DecreaseTol,
    IterationCap,
    /// A non-finite cost or gradient appeared; the best finite iterate is returned.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// Lowest-cost iterate seen.
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub final_cost: f64,
    pub breakdown: CostBreakdown,
    pub cost_history: Vec<f64>,
    /// Weighted-in terms per entry of `cost_history`; zero-weight terms read 0.
    pub breakdown_history: Vec<CostBreakdown>,
    pub termination: Termination,
}

impl OptResult {
    pub fn failed(&self) -> bool {
        self.termination == Termination::NonFinite
    }
}

/// Times a rejected step is halved before the descent gives up.
pub const MAX_HALVINGS: usize = 30;

/// Runs the descent from `xi_init`, whose first waypoint is held fixed.
/// A step that raises the cost is halved until it lowers it; if none of
/// [`MAX_HALVINGS`] halvings does, the descent stops with
/// [`Termination::DecreaseTol`].
pub fn optimize(
    xi_init: &Trajectory,
    ctx: &CostContext,
    smooth: &SmoothnessOperator,
    xi_shot: &Trajectory,
    params: &OptParams,
) -> Result<OptResult> {
    let metric = build_metric(smooth, ctx.weights.lambda3)?;
    optimize_with_metric(xi_init, ctx, smooth, &metric, xi_shot, params)
}

pub fn optimize_with_metric(
    xi_init: &Trajectory,
    ctx: &CostContext,
    smooth: &SmoothnessOperator,
    metric: &Metric,
    xi_shot: &Trajectory,
    params: &OptParams,
) -> Result<OptResult> {
    params.validate()?;
    ctx.validate()?;
    xi_init.check_same_grid(xi_shot, "optimizer shot trajectory")?;
    if metric.n() != xi_init.len() || smooth.n() != xi_init.len() {
        return Err(Error::GridMismatch("metric and trajectory sizes differ".into()));
    }

    let mut xi = xi_init.clone();
    let mut history = Vec::with_capacity(params.i_max + 1);
    let mut breakdowns = Vec::with_capacity(params.i_max + 1);
    let mut best: Option<(f64, CostBreakdown, Trajectory)> = None;
    let mut termination = Termination::IterationCap;

    let (mut breakdown, mut grad) = total_cost(&xi, ctx, smooth, xi_shot)?;
    if breakdown.total.is_finite() && grad.iter().all(is_finite) {
        history.push(breakdown.total);
        breakdowns.push(breakdown);
        best = Some((breakdown.total, breakdown, xi.clone()));
    } else {
        termination = Termination::NonFinite;
    }

    let mut update = 0;
    while best.is_some() && update < params.i_max {
        let j = breakdown.total;
        let step = metric.solve(&grad);
        let decrement: f64 = grad.iter().zip(&step).map(|(g, d)| g.dot(d)).sum();
        if decrement * decrement / 2.0 < params.eps0 {
            termination = Termination::GradientTol;
            break;
        }
        let mut scale = 1.0 / params.eta;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let pts: Vec<Vec3> = xi
                .waypoints()
                .iter()
                .zip(&step)
                .enumerate()
                .map(|(k, (p, d))| if k == 0 { *p } else { p - d * scale })
                .collect();
            if !pts.iter().all(is_finite) {
                termination = Termination::NonFinite;
                break;
            }
            let candidate = xi.with_waypoints(pts)?;
            let (b, g) = total_cost(&candidate, ctx, smooth, xi_shot)?;
            if !(b.total.is_finite() && g.iter().all(is_finite)) {
                termination = Termination::NonFinite;
                break;
            }
            if b.total < j {
                accepted = Some((candidate, b, g));
                break;
            }
            scale *= 0.5;
        }
        if termination == Termination::NonFinite {
            break;
        }
        let Some((candidate, b, g)) = accepted else {
            termination = Termination::DecreaseTol;
            break;
        };
        update += 1;
        xi = candidate;
        breakdown = b;
        grad = g;
        history.push(b.total);
        breakdowns.push(b);
        best = Some((b.total, b, xi.clone()));
        if j - b.total < params.eps1 {
            termination = Termination::DecreaseTol;
            break;
        }
    }

    let iterations = history.len().saturating_sub(1);
    let (final_cost, breakdown, trajectory) = match best {
        Some(b) => b,
        // the initial guess itself was not finite
        None => (f64::NAN, CostBreakdown::default(), xi_init.clone()),
    };
    Ok(OptResult {
        trajectory,
        iterations,
        final_cost,
        breakdown,
        cost_history: history,
        breakdown_history: breakdowns,
        termination,
    })
}

/// Initial guess for the next replan: the previous plan advanced by
/// `elapsed_s`, extended in a straight line at `tail_velocity`, and
/// translated so that it starts at the new boundary condition.
pub fn warm_start(
    prev: &Trajectory,
    elapsed_s: f64,
    tail_velocity: Vec3,
    bc: &BoundaryCondition,
) -> Result<Trajectory> {
    let shifted = time_shift(prev, elapsed_s, tail_velocity)?;
    let offset = bc.start_position - shifted.first();
    let pts = shifted.waypoints().iter().map(|p| p + offset).collect();
    shifted.with_waypoints(pts)
}
