//! TOML files for environments, scenarios and benchmark runs.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::forecast::NoiseParams;
use crate::geom::BoundaryCondition;
use crate::shot::{ShotSchedule, ShotSpec};
use crate::sim::{ActorScript, BenchmarkConfig, PlannerSettings, Scenario};
use crate::tsdf::Environment;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeFile {
    #[serde(default)]
    time_s: f64,
    distance_rho: f64,
    phi_rel: f64,
    theta_rel: f64,
    #[serde(default = "centered")]
    screen_pos: (f64, f64),
}

fn centered() -> (f64, f64) {
    (0.5, 0.5)
}

fn default_hz() -> f64 {
    5.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    seed: u64,
    duration_s: f64,
    #[serde(default = "default_hz")]
    replan_hz: f64,
    environment: Option<Environment>,
    /// Relative to the scenario file.
    environment_file: Option<PathBuf>,
    actor: ActorScript,
    shot: Vec<KeyframeFile>,
    drone_start: Option<BoundaryCondition>,
    #[serde(default)]
    noise: NoiseParams,
    #[serde(default)]
    planner: PlannerSettings,
}

fn config_err(path: &Path, message: impl ToString) -> Error {
    Error::Config { path: path.to_path_buf(), message: message.to_string() }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_err(path, e))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| config_err(path, e))
}

pub fn load_environment(path: impl AsRef<Path>) -> Result<Environment> {
    let path = path.as_ref();
    let env: Environment = parse(path, &read(path)?)?;
    env.validate().map_err(|e| config_err(path, e))?;
    Ok(env)
}

pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let file: ScenarioFile = parse(path, text)?;
    let environment = match (file.environment, file.environment_file) {
        (Some(env), None) => env,
        (None, Some(rel)) => {
            let base = path.parent().unwrap_or(Path::new("."));
            load_environment(base.join(rel))?
        }
        _ => return Err(config_err(path, "give exactly one of `environment` or `environment_file`")),
    };
    let keyframes = file
        .shot
        .into_iter()
        .map(|k| {
            let spec = ShotSpec {
                distance_rho: k.distance_rho,
                phi_rel: k.phi_rel,
                theta_rel: k.theta_rel,
                screen_pos: k.screen_pos,
            };
            spec.validate()?;
            Ok((k.time_s, spec))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| config_err(path, format!("shot: {e}")))?;
    let shot = ShotSchedule::new(keyframes).map_err(|e| config_err(path, format!("shot: {e}")))?;
    let scenario = Scenario {
        environment,
        actor: file.actor,
        shot,
        drone_start: file.drone_start,
        replan_hz: file.replan_hz,
        duration_s: file.duration_s,
        noise: file.noise,
        seed: file.seed,
        planner: file.planner,
    };
    scenario.validate().map_err(|e| config_err(path, e))?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    parse_scenario(&read(path)?, path)
}

pub fn load_benchmark(path: impl AsRef<Path>) -> Result<BenchmarkConfig> {
    let path = path.as_ref();
    let cfg: BenchmarkConfig = parse(path, &read(path)?)?;
    cfg.validate().map_err(|e| config_err(path, e))?;
    Ok(cfg)
}
