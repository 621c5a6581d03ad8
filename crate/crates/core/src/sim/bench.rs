use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::DistanceStats;
use super::{
    fmt, median, random_environment, run_simulation_with_grid, shot_distance_metric,
    visibility_metric, ActorScript, PlannerSettings, RandomEnvSpec, Scenario, SimOptions,
};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::forecast::NoiseParams;
use crate::geom::Vec3;
use crate::shot::{ShotSchedule, ShotSpec};
use crate::tsdf::{build_tsdf, Aabb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostCondition {
    /// All four cost terms.
    OcclusionAndObstacle,
    /// Occlusion weight forced to zero.
    ObstacleOnly,
}

impl CostCondition {
    pub fn label(self) -> &'static str {
        match self {
            CostCondition::OcclusionAndObstacle => "occlusion_and_obstacle",
            CostCondition::ObstacleOnly => "obstacle_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchWorld {
    pub bounds: Aabb,
    pub radius_min: f64,
    pub radius_max: f64,
    #[serde(default)]
    pub ground_z: Option<f64>,
    pub corridor_radius: f64,
    pub drone_clearance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchActor {
    pub start: Vec3,
    pub end: Vec3,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seeds: usize,
    pub seed_base: u64,
    pub sphere_counts: Vec<usize>,
    pub conditions: Vec<CostCondition>,
    pub world: BenchWorld,
    pub actor: BenchActor,
    pub shot: ShotSpec,
    pub replan_hz: f64,
    /// Defaults to the time the actor needs to walk its path.
    pub duration_s: Option<f64>,
    pub noise: NoiseParams,
    pub planner: PlannerSettings,
    /// How seeds are spread over threads.
    pub execution: Execution,
    pub record_timing: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seeds: 30,
            seed_base: 1,
            sphere_counts: vec![1, 20, 40],
            conditions: vec![CostCondition::OcclusionAndObstacle, CostCondition::ObstacleOnly],
            world: BenchWorld {
                bounds: Aabb {
                    min: Vec3::new(-25.0, -12.0, -4.0),
                    max: Vec3::new(25.0, 12.0, 6.0),
                },
                radius_min: 1.0,
                radius_max: 3.0,
                ground_z: None,
                corridor_radius: 1.5,
                drone_clearance: 1.5,
            },
            actor: BenchActor {
                start: Vec3::new(-20.0, 0.0, 0.0),
                end: Vec3::new(20.0, 0.0, 0.0),
                speed: 1.5,
            },
            shot: ShotSpec {
                distance_rho: 8.0,
                phi_rel: std::f64::consts::FRAC_PI_2,
                theta_rel: 0.2,
                screen_pos: (0.5, 0.5),
            },
            replan_hz: 5.0,
            duration_s: None,
            noise: NoiseParams::default(),
            planner: PlannerSettings {
                eps_obs: 1.0,
                derivative_weights: vec![1.0, 2.0],
                ..PlannerSettings::default()
            },
            execution: Execution::Parallel,
            record_timing: false,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 || self.sphere_counts.is_empty() || self.conditions.is_empty() {
            return Err(invalid("benchmark needs seeds, sphere counts and conditions"));
        }
        self.shot.validate()?;
        self.scenario(crate::tsdf::Environment::empty(self.world.bounds), 0).validate()
    }

    fn script(&self) -> ActorScript {
        ActorScript::Line { start: self.actor.start, end: self.actor.end, speed: self.actor.speed }
    }

    pub fn duration(&self) -> f64 {
        self.duration_s.unwrap_or_else(|| {
            (self.actor.end - self.actor.start).norm() / self.actor.speed.max(1e-9)
        })
    }

    /// Seed of the world for one (sphere count, seed index) cell.
    pub fn world_seed(&self, spheres: usize, index: usize) -> u64 {
        self.seed_base
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((spheres as u64) << 32)
            .wrapping_add(index as u64)
    }

    fn scenario(&self, environment: crate::tsdf::Environment, seed: u64) -> Scenario {
        Scenario {
            environment,
            actor: self.script(),
            shot: ShotSchedule::fixed(self.shot),
            drone_start: None,
            replan_hz: self.replan_hz,
            duration_s: self.duration(),
            noise: self.noise,
            seed,
            planner: self.planner.clone(),
        }
    }

    /// The scenario one benchmark cell runs, with occlusion weight `lambda2`.
    pub fn cell_scenario(&self, spheres: usize, index: usize, lambda2: f64) -> Result<Scenario> {
        let seed = self.world_seed(spheres, index);
        let env = random_environment(seed, spheres, &self.env_spec())?;
        let mut s = self.scenario(env, seed);
        s.planner.lambda2 = lambda2;
        Ok(s)
    }

    fn env_spec(&self) -> RandomEnvSpec {
        let probe = self.scenario(crate::tsdf::Environment::empty(self.world.bounds), 0);
        RandomEnvSpec {
            bounds: self.world.bounds,
            radius_min: self.world.radius_min,
            radius_max: self.world.radius_max,
            ground_z: self.world.ground_z,
            corridor_start: self.actor.start,
            corridor_end: self.actor.end,
            corridor_radius: self.world.corridor_radius,
            drone_start: probe.true_viewpoint(0.0),
            drone_clearance: self.world.drone_clearance,
            max_attempts: 1000,
        }
    }
}

/// Outcome of one condition on one random world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub spheres: usize,
    pub seed_index: usize,
    pub world_seed: u64,
    pub condition: CostCondition,
    pub visibility_pct: f64,
    pub shot_distance_mean: f64,
    pub shot_distance_std: f64,
    pub median_solve_ms: f64,
    pub failed_replans: usize,
    pub error: Option<String>,
}

impl SeedResult {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.failed_replans > 0
    }
}

/// Aggregate over seeds for one condition and sphere count. Failed seeds
/// are excluded and counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub condition: CostCondition,
    pub spheres: usize,
    pub runs: usize,
    pub failed: usize,
    pub visibility_mean: f64,
    pub visibility_std: f64,
    pub shot_distance_mean: f64,
    pub shot_distance_std: f64,
    pub median_solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub cells: Vec<CellStats>,
    pub seeds: Vec<SeedResult>,
}

impl BenchmarkStats {
    pub fn cell(&self, condition: CostCondition, spheres: usize) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.condition == condition && c.spheres == spheres)
    }

    pub fn failed_runs(&self) -> usize {
        self.seeds.iter().filter(|s| s.failed()).count()
    }

    pub fn write_table_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "condition", "spheres", "runs", "failed", "visibility_mean", "visibility_std",
            "shot_distance_mean", "shot_distance_std", "median_solve_ms",
        ])?;
        for c in &self.cells {
            wr.write_record([
                c.condition.label().to_string(),
                c.spheres.to_string(),
                c.runs.to_string(),
                c.failed.to_string(),
                fmt(c.visibility_mean),
                fmt(c.visibility_std),
                fmt(c.shot_distance_mean),
                fmt(c.shot_distance_std),
                fmt(c.median_solve_ms),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_seeds_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "condition", "spheres", "seed_index", "world_seed", "visibility_pct",
            "shot_distance_mean", "shot_distance_std", "median_solve_ms", "failed_replans", "error",
        ])?;
        for s in &self.seeds {
            wr.write_record([
                s.condition.label().to_string(),
                s.spheres.to_string(),
                s.seed_index.to_string(),
                s.world_seed.to_string(),
                fmt(s.visibility_pct),
                fmt(s.shot_distance_mean),
                fmt(s.shot_distance_std),
                fmt(s.median_solve_ms),
                s.failed_replans.to_string(),
                s.error.clone().unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn failure(
    spheres: usize,
    seed_index: usize,
    world_seed: u64,
    condition: CostCondition,
    msg: String,
) -> SeedResult {
    SeedResult {
        spheres,
        seed_index,
        world_seed,
        condition,
        visibility_pct: f64::NAN,
        shot_distance_mean: f64::NAN,
        shot_distance_std: f64::NAN,
        median_solve_ms: f64::NAN,
        failed_replans: 0,
        error: Some(msg),
    }
}

fn run_world(cfg: &BenchmarkConfig, spheres: usize, seed_index: usize) -> Vec<SeedResult> {
    let world_seed = cfg.world_seed(spheres, seed_index);
    let all_fail = |msg: String| {
        cfg.conditions
            .iter()
            .map(|&c| failure(spheres, seed_index, world_seed, c, msg.clone()))
            .collect()
    };
    let env = match random_environment(world_seed, spheres, &cfg.env_spec()) {
        Ok(e) => e,
        Err(e) => return all_fail(e.to_string()),
    };
    let grid = match build_tsdf(&env, cfg.planner.tsdf_resolution, cfg.planner.tsdf_truncation) {
        Ok(g) => std::sync::Arc::new(g),
        Err(e) => return all_fail(e.to_string()),
    };
    let options = SimOptions { record_timing: cfg.record_timing };
    cfg.conditions
        .iter()
        .map(|&condition| {
            // both conditions see the same world and the same measurement noise
            let mut scenario = cfg.scenario(env.clone(), world_seed);
            if condition == CostCondition::ObstacleOnly {
                scenario.planner.lambda2 = 0.0;
            }
            let log = match run_simulation_with_grid(&scenario, grid.clone(), &options) {
                Ok(l) => l,
                Err(e) => return failure(spheres, seed_index, world_seed, condition, e.to_string()),
            };
            let vis = visibility_metric(&log);
            let dist = shot_distance_metric(&log);
            match (vis, dist) {
                (Ok(v), Ok(d)) => SeedResult {
                    spheres,
                    seed_index,
                    world_seed,
                    condition,
                    visibility_pct: v,
                    shot_distance_mean: d.mean,
                    shot_distance_std: d.std,
                    median_solve_ms: log.median_solve_ms(),
                    failed_replans: log.failed_replans(),
                    error: None,
                },
                (Err(e), _) | (_, Err(e)) => {
                    failure(spheres, seed_index, world_seed, condition, e.to_string())
                }
            }
        })
        .collect()
}

/// Runs every condition on `cfg.seeds` random worlds per sphere count.
/// Results are ordered by sphere count, seed and condition whatever the
/// execution mode.
pub fn benchmark_table1(cfg: &BenchmarkConfig) -> Result<BenchmarkStats> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = cfg
        .sphere_counts
        .iter()
        .flat_map(|&s| (0..cfg.seeds).map(move |i| (s, i)))
        .collect();
    let seeds: Vec<SeedResult> = cfg
        .execution
        .map(tasks.len(), |t| run_world(cfg, tasks[t].0, tasks[t].1))
        .into_iter()
        .flatten()
        .collect();

    let mut cells = Vec::new();
    for &condition in &cfg.conditions {
        for &spheres in &cfg.sphere_counts {
            let rows: Vec<&SeedResult> = seeds
                .iter()
                .filter(|s| s.condition == condition && s.spheres == spheres)
                .collect();
            let ok: Vec<&SeedResult> = rows.iter().copied().filter(|s| !s.failed()).collect();
            let vis: Vec<f64> = ok.iter().map(|s| s.visibility_pct).collect();
            let dist: Vec<f64> = ok.iter().map(|s| s.shot_distance_mean).collect();
            let nan = DistanceStats { mean: f64::NAN, std: f64::NAN };
            let v = DistanceStats::of(&vis).unwrap_or(nan);
            let d = DistanceStats::of(&dist).unwrap_or(nan);
            cells.push(CellStats {
                condition,
                spheres,
                runs: ok.len(),
                failed: rows.len() - ok.len(),
                visibility_mean: v.mean,
                visibility_std: v.std,
                shot_distance_mean: d.mean,
                shot_distance_std: d.std,
                median_solve_ms: median(ok.iter().map(|s| s.median_solve_ms).collect()),
            });
        }
    }
    Ok(BenchmarkStats { cells, seeds })
}
