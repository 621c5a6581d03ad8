//! Closed-loop replanning simulation.
//!
//! Each replan: feed the filter the actor fixes since the last plan, forecast
//! the actor over the horizon, place the ideal viewpoint, warm-start and run
//! the optimizer, then let the drone follow the new plan exactly until the
//! next replan.

mod bench;
mod gimbal;
mod metrics;
mod random_env;

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use bench::{
    benchmark_table1, BenchActor, BenchWorld, BenchmarkConfig, BenchmarkStats, CellStats,
    CostCondition, SeedResult,
};
pub use gimbal::{gimbal_angles, project};
pub use metrics::{
    max_step_displacement, segment_visible, shot_distance_metric, visibility_metric, DistanceStats,
    VISIBILITY_SAMPLES,
};
pub use random_env::{random_environment, RandomEnvSpec};

use crate::costs::{build_smoothness, cost_breakdown, CostBreakdown, CostContext, Weights};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::forecast::{forecast_actor, kf_predict, kf_update, ActorState, NoiseParams};
use crate::geom::{velocities_of, BoundaryCondition, Trajectory, Vec3};
use crate::optimizer::{build_metric, optimize_with_metric, warm_start, OptParams, Termination};
use crate::shot::{ideal_shot_trajectory, ShotSchedule};
use crate::tsdf::{build_tsdf, Environment, TsdfGrid};

/// Speed bound used to flag discontinuities in the executed path, m/s.
pub const V_MAX: f64 = 7.5;

/// Scripted ground-truth actor motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActorScript {
    /// Walks from `start` towards `end` at `speed`, then stops.
    Line { start: Vec3, end: Vec3, speed: f64 },
    /// Circles `center` in the horizontal plane, counter-clockwise for
    /// positive `speed`.
    Circle { center: Vec3, radius: f64, speed: f64, start_angle: f64 },
    /// Follows the polyline through `points` at `speed`, stopping at the last.
    Polyline { points: Vec<Vec3>, speed: f64 },
    /// Stands still facing `heading`.
    Still { position: Vec3, heading: f64 },
}

impl ActorScript {
    pub fn validate(&self) -> Result<()> {
        match self {
            ActorScript::Line { start, end, speed } => {
                if !(speed.is_finite() && *speed >= 0.0) || (end - start).norm() == 0.0 {
                    return Err(invalid("line actor needs distinct endpoints and speed >= 0"));
                }
            }
            ActorScript::Circle { radius, speed, .. } => {
                if !(*radius > 0.0 && speed.is_finite()) {
                    return Err(invalid("circle actor needs a positive radius"));
                }
            }
            ActorScript::Polyline { points, speed } => {
                if points.len() < 2 || !(speed.is_finite() && *speed >= 0.0) {
                    return Err(invalid("polyline actor needs two points and speed >= 0"));
                }
            }
            ActorScript::Still { .. } => {}
        }
        Ok(())
    }

    pub fn position(&self, t: f64) -> Vec3 {
        match self {
            ActorScript::Line { start, end, speed } => {
                let len = (end - start).norm();
                let s = (speed * t).clamp(0.0, len);
                start + (end - start) * (s / len)
            }
            ActorScript::Circle { center, radius, speed, start_angle } => {
                let ang = start_angle + speed * t / radius;
                center + Vec3::new(ang.cos(), ang.sin(), 0.0) * *radius
            }
            ActorScript::Polyline { points, speed } => {
                let mut s = (speed * t).max(0.0);
                for w in points.windows(2) {
                    let seg = (w[1] - w[0]).norm();
                    if s <= seg && seg > 0.0 {
                        return w[0] + (w[1] - w[0]) * (s / seg);
                    }
                    s -= seg;
                }
                points[points.len() - 1]
            }
            ActorScript::Still { position, .. } => *position,
        }
    }

    /// Heading the actor faces at the start of the script.
    pub fn initial_heading(&self) -> f64 {
        match self {
            ActorScript::Line { start, end, .. } => (end.y - start.y).atan2(end.x - start.x),
            ActorScript::Circle { start_angle, speed, .. } => {
                start_angle + if *speed >= 0.0 { PI / 2.0 } else { -PI / 2.0 }
            }
            ActorScript::Polyline { points, .. } => {
                let d = points[1] - points[0];
                d.y.atan2(d.x)
            }
            ActorScript::Still { heading, .. } => *heading,
        }
    }
}

/// Every tunable of the planner in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSettings {
    pub n: usize,
    pub horizon_s: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub eps_obs: f64,
    pub actor_clearance_radius: f64,
    pub tau_samples: usize,
    /// Weights of squared velocity, acceleration, jerk differences.
    pub derivative_weights: Vec<f64>,
    pub eta: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub i_max: usize,
    pub tsdf_resolution: f64,
    pub tsdf_truncation: f64,
    pub measurement_hz: f64,
    /// Prior velocity standard deviation when the filter starts, m/s.
    pub initial_velocity_std: f64,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        let w = Weights::default();
        let o = OptParams::default();
        Self {
            n: 51,
            horizon_s: 10.0,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            lambda3: w.lambda3,
            eps_obs: 2.0,
            actor_clearance_radius: 1.0,
            tau_samples: 16,
            derivative_weights: vec![1.0],
            eta: o.eta,
            eps0: o.eps0,
            eps1: o.eps1,
            i_max: o.i_max,
            tsdf_resolution: 0.25,
            tsdf_truncation: 3.0,
            measurement_hz: 10.0,
            initial_velocity_std: 2.0,
        }
    }
}

impl PlannerSettings {
    pub fn weights(&self) -> Weights {
        Weights { lambda1: self.lambda1, lambda2: self.lambda2, lambda3: self.lambda3 }
    }

    pub fn opt_params(&self) -> OptParams {
        OptParams { eta: self.eta, eps0: self.eps0, eps1: self.eps1, i_max: self.i_max }
    }

    pub fn cost_context(&self, grid: Arc<TsdfGrid>, actor_traj: Trajectory) -> CostContext {
        let mut ctx = CostContext::new(grid, actor_traj);
        ctx.weights = self.weights();
        ctx.eps_obs = self.eps_obs;
        ctx.actor_clearance_radius = self.actor_clearance_radius;
        ctx.tau_samples = self.tau_samples;
        ctx
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(invalid("n must be at least 3"));
        }
        if !(self.horizon_s > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        if !(self.measurement_hz > 0.0) {
            return Err(invalid("measurement rate must be positive"));
        }
        if !(self.initial_velocity_std > 0.0) {
            return Err(invalid("initial velocity std must be positive"));
        }
        self.opt_params().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub environment: Environment,
    pub actor: ActorScript,
    pub shot: ShotSchedule,
    /// `None` starts the drone at rest on the ideal viewpoint.
    pub drone_start: Option<BoundaryCondition>,
    pub replan_hz: f64,
    pub duration_s: f64,
    pub noise: NoiseParams,
    pub seed: u64,
    pub planner: PlannerSettings,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.replan_hz > 0.0 && self.replan_hz.is_finite()) {
            return Err(invalid("replan_hz must be positive"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration_s must be positive"));
        }
        if 1.0 / self.replan_hz >= self.planner.horizon_s {
            return Err(invalid("replan period must be shorter than the horizon"));
        }
        self.environment.validate()?;
        self.actor.validate()?;
        self.noise.validate()?;
        self.planner.validate()
    }

    /// Ideal viewpoint for the true actor at time `t`.
    pub fn true_viewpoint(&self, t: f64) -> Vec3 {
        let a = self.actor.position(t);
        a + self.shot.at(t).offset(self.actor.initial_heading())
    }

    pub fn build_grid(&self) -> Result<Arc<TsdfGrid>> {
        Ok(Arc::new(build_tsdf(
            &self.environment,
            self.planner.tsdf_resolution,
            self.planner.tsdf_truncation,
        )?))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Measure optimizer wall time. Off by default so logs are reproducible.
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub time_s: f64,
    /// Where the drone is at `time_s` (start of the new plan).
    pub drone: Vec3,
    pub actor_truth: Vec3,
    pub actor_estimate: Vec3,
    /// Ideal viewpoint the planner aimed for at `time_s`.
    pub shot: Vec3,
    pub costs: CostBreakdown,
    pub iterations: usize,
    pub solve_ms: f64,
    pub visible: bool,
    pub termination: Termination,
    pub plan: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub records: Vec<SimRecord>,
    pub environment: Environment,
    pub replan_hz: f64,
}

impl SimLog {
    pub fn failed_replans(&self) -> usize {
        self.records.iter().filter(|r| r.termination == Termination::NonFinite).count()
    }

    pub fn median_solve_ms(&self) -> f64 {
        median(self.records.iter().map(|r| r.solve_ms).collect())
    }

    /// One row per replan.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "time_s", "drone_x", "drone_y", "drone_z", "actor_x", "actor_y", "actor_z",
            "actor_est_x", "actor_est_y", "actor_est_z", "shot_x", "shot_y", "shot_z", "j_total",
            "j_smooth", "j_obs", "j_occ", "j_shot", "iterations", "solve_ms", "visible",
        ])?;
        for r in &self.records {
            let mut row: Vec<String> = vec![fmt(r.time_s)];
            for v in [r.drone, r.actor_truth, r.actor_estimate, r.shot] {
                row.extend(v.iter().map(|c| fmt(*c)));
            }
            let c = r.costs;
            row.extend([c.total, c.smooth, c.obstacle, c.occlusion, c.shot].map(fmt));
            row.push(r.iterations.to_string());
            row.push(fmt(r.solve_ms));
            row.push(u8::from(r.visible).to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }
}

/// Shortest representation that round-trips the exact `f64`.
pub(crate) fn fmt(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// One planning problem at `t = 0` with the actor state known exactly.
#[derive(Debug, Clone)]
pub struct SinglePlan {
    pub actor: Trajectory,
    pub shot: Trajectory,
    pub initial: Trajectory,
    pub result: crate::optimizer::OptResult,
}

pub fn plan_once(scenario: &Scenario, grid: Arc<TsdfGrid>) -> Result<SinglePlan> {
    scenario.validate()?;
    let p = &scenario.planner;
    let h = 1e-3;
    let velocity = (scenario.actor.position(h) - scenario.actor.position(0.0)) / h;
    let state = ActorState::new(
        scenario.actor.position(0.0),
        velocity,
        crate::forecast::Covariance6::identity() * 1e-6,
        scenario.actor.initial_heading(),
        0.0,
    )?;
    let (actor, headings) = forecast_actor(&state, p.horizon_s, p.n)?;
    let shot = ideal_shot_trajectory(&actor, &headings, &scenario.shot)?;
    let bc = scenario
        .drone_start
        .unwrap_or_else(|| BoundaryCondition::at_rest(scenario.true_viewpoint(0.0)));
    let dt = p.horizon_s / (p.n - 1) as f64;
    let smooth = build_smoothness(p.n, dt, &bc, &p.derivative_weights)?;
    let end = shot.last();
    let initial = Trajectory::from_fn(p.n, p.horizon_s, 0.0, |s| {
        bc.start_position + (end - bc.start_position) * (s / p.horizon_s)
    })?;
    let ctx = p.cost_context(grid, actor.clone());
    let result = crate::optimizer::optimize(&initial, &ctx, &smooth, &shot, &p.opt_params())?;
    Ok(SinglePlan { actor, shot, initial, result })
}

pub fn run_simulation(scenario: &Scenario) -> Result<SimLog> {
    scenario.validate()?;
    let grid = scenario.build_grid()?;
    run_simulation_with_grid(scenario, grid, &SimOptions::default())
}

/// Runs the loop on a prebuilt grid of `scenario.environment`.
pub fn run_simulation_with_grid(
    scenario: &Scenario,
    grid: Arc<TsdfGrid>,
    options: &SimOptions,
) -> Result<SimLog> {
    scenario.validate()?;
    let p = &scenario.planner;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let meas_noise = Normal::new(0.0, scenario.noise.measurement_pos_std)
        .map_err(|e| invalid(e.to_string()))?;
    let measure = |t: f64, rng: &mut ChaCha8Rng| {
        scenario.actor.position(t)
            + Vec3::new(meas_noise.sample(rng), meas_noise.sample(rng), meas_noise.sample(rng))
    };

    let period = 1.0 / scenario.replan_hz;
    let meas_period = 1.0 / p.measurement_hz;
    let mut state = ActorState::from_first_fix(
        measure(0.0, &mut rng),
        scenario.actor.initial_heading(),
        0.0,
        &scenario.noise,
        p.initial_velocity_std,
    )?;
    let mut meas_index = 1usize;

    let mut bc = scenario
        .drone_start
        .unwrap_or_else(|| BoundaryCondition::at_rest(scenario.true_viewpoint(0.0)));
    let steps = (scenario.duration_s * scenario.replan_hz + 1e-9).floor() as usize + 1;
    let dt = p.horizon_s / (p.n - 1) as f64;
    let params = p.opt_params();
    let mut prev_plan: Option<Trajectory> = None;
    let mut records = Vec::with_capacity(steps);

    for step in 0..steps {
        let t = step as f64 * period;
        while (meas_index as f64) * meas_period <= t + 1e-9 {
            let tm = meas_index as f64 * meas_period;
            state = kf_predict(&state, tm - state.last_update_s, &scenario.noise)?;
            state = kf_update(&state, measure(tm, &mut rng), &scenario.noise)?;
            meas_index += 1;
        }
        let now = if t > state.last_update_s + 1e-12 {
            kf_predict(&state, t - state.last_update_s, &scenario.noise)?
        } else {
            state
        };
        let (actor_traj, headings) = forecast_actor(&now, p.horizon_s, p.n)?;
        let actor_traj = Trajectory::new(actor_traj.waypoints().to_vec(), p.horizon_s, t)?;
        let xi_shot = ideal_shot_trajectory(&actor_traj, &headings, &scenario.shot)?;
        let smooth = build_smoothness(p.n, dt, &bc, &p.derivative_weights)?;
        let mut ctx = p.cost_context(grid.clone(), actor_traj);
        ctx.execution = Execution::Sequential;

        let n = p.n;
        let tail_velocity = (xi_shot.waypoints()[n - 1] - xi_shot.waypoints()[n - 2]) / dt;
        let init = match &prev_plan {
            Some(prev) => warm_start(prev, period, tail_velocity, &bc)?,
            None => {
                let end = xi_shot.last();
                Trajectory::from_fn(n, p.horizon_s, t, |s| {
                    bc.start_position + (end - bc.start_position) * (s / p.horizon_s)
                })?
            }
        };
        let init = Trajectory::new(init.waypoints().to_vec(), p.horizon_s, t)?;

        let metric = build_metric(&smooth, ctx.weights.lambda3)?;
        let clock = Instant::now();
        let result = optimize_with_metric(&init, &ctx, &smooth, &metric, &xi_shot, &params)?;
        let solve_ms = if options.record_timing {
            clock.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        let plan = if result.failed() { init } else { result.trajectory.clone() };
        let costs = if result.failed() {
            cost_breakdown(&plan, &ctx, &smooth, &xi_shot).unwrap_or_default()
        } else {
            // reported terms are unweighted, including zero-weight ones
            let mut b = cost_breakdown(&plan, &ctx, &smooth, &xi_shot)?;
            b.total = result.final_cost;
            b
        };

        let truth = scenario.actor.position(t);
        records.push(SimRecord {
            time_s: t,
            drone: bc.start_position,
            actor_truth: truth,
            actor_estimate: now.position,
            shot: xi_shot.first(),
            costs,
            iterations: result.iterations,
            solve_ms,
            visible: segment_visible(&scenario.environment, &bc.start_position, &truth),
            termination: result.termination,
            plan: plan.clone(),
        });

        // the drone follows the plan exactly until the next replan
        let vel = velocities_of(plan.waypoints(), dt);
        let u = period / dt;
        let i = (u.floor() as usize).min(n - 2);
        let frac = u - i as f64;
        bc = BoundaryCondition::new(plan.sample(period), vel[i] * (1.0 - frac) + vel[i + 1] * frac)?;
        prev_plan = Some(plan);
    }

    Ok(SimLog {
        records,
        environment: scenario.environment.clone(),
        replan_hz: scenario.replan_hz,
    })
}
