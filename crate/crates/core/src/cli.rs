//! Command-line front end. [`run`] returns the process exit code so the
//! commands can be exercised in-process.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{load_benchmark, load_environment, load_scenario};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::sim::{
    benchmark_table1, max_step_displacement, plan_once, run_simulation_with_grid,
    shot_distance_metric, visibility_metric, BenchmarkConfig, PlannerSettings, SimOptions,
};
use crate::tsdf::{build_tsdf, TsdfGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cineplan", version, about = "Occlusion-aware camera drone trajectory planner")]
pub struct Cli {
    /// Only print errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a single trajectory at t = 0.
    Plan(ScenarioArgs),
    /// Run the closed-loop replanning simulation.
    Sim {
        #[command(flatten)]
        args: ScenarioArgs,
        /// Record optimizer wall time (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
        /// Also write the full log as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the randomized benchmark.
    Bench {
        /// Benchmark TOML; built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        spheres: Option<Vec<usize>>,
        /// Run seeds one after another.
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        planner: PlannerOverrides,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Build a TSDF grid from an environment file.
    Tsdf {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        resolution: f64,
        #[arg(long, default_value_t = 3.0)]
        truncation: f64,
        /// Output grid file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the header of a grid file.
    Inspect { grid: PathBuf },
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long = "out", env = "CINEPLAN_OUT", default_value = ".")]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub planner: PlannerOverrides,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args, Default)]
pub struct PlannerOverrides {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub tau_samples: Option<usize>,
    #[arg(long)]
    pub i_max: Option<usize>,
}

impl PlannerOverrides {
    pub fn apply(&self, p: &mut PlannerSettings) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        if let Some(n) = self.n {
            p.n = n;
        }
        set(&mut p.horizon_s, self.horizon);
        set(&mut p.lambda1, self.lambda1);
        set(&mut p.lambda2, self.lambda2);
        set(&mut p.lambda3, self.lambda3);
        set(&mut p.eta, self.eta);
        if let Some(t) = self.tau_samples {
            p.tau_samples = t;
        }
        if let Some(i) = self.i_max {
            p.i_max = i;
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::VoxelCap { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

pub fn execute(cli: &Cli) -> Result<i32> {
    let quiet = cli.quiet;
    match &cli.command {
        Command::Plan(args) => cmd_plan(args, quiet),
        Command::Sim { args, timing, json } => cmd_sim(args, *timing, *json, quiet),
        Command::Bench { config, seeds, seed, spheres, sequential, timing, planner, out } => {
            let mut cfg = match config {
                Some(p) => load_benchmark(p)?,
                None => BenchmarkConfig::default(),
            };
            if let Some(s) = seeds {
                cfg.seeds = *s;
            }
            if let Some(s) = seed {
                cfg.seed_base = *s;
            }
            if let Some(s) = spheres {
                cfg.sphere_counts = s.clone();
            }
            if *sequential {
                cfg.execution = Execution::Sequential;
            }
            cfg.record_timing |= *timing;
            planner.apply(&mut cfg.planner);
            cmd_bench(&cfg, &out.dir, quiet)
        }
        Command::Tsdf { env, resolution, truncation, out } => {
            let env = load_environment(env)?;
            let grid = build_tsdf(&env, *resolution, *truncation)?;
            grid.save(out)?;
            let [x, y, z] = grid.dims();
            say(quiet, format!("dims {x} x {y} x {z}"));
            say(quiet, format!("voxels {}", grid.voxel_count()));
            say(quiet, format!("memory_bytes {}", grid.memory_bytes()));
            Ok(EXIT_OK)
        }
        Command::Inspect { grid } => {
            let g = TsdfGrid::load(grid)?;
            let [x, y, z] = g.dims();
            let o = g.origin();
            println!("origin {} {} {}", o.x, o.y, o.z);
            println!("resolution {}", g.resolution());
            println!("dims {x} x {y} x {z}");
            println!("truncation {}", g.truncation());
            println!("voxels {}", g.voxel_count());
            Ok(EXIT_OK)
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<crate::sim::Scenario> {
    let mut s = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    args.planner.apply(&mut s.planner);
    s.validate()?;
    Ok(s)
}

fn cmd_plan(args: &ScenarioArgs, quiet: bool) -> Result<i32> {
    let scenario = load(args)?;
    let grid = scenario.build_grid()?;
    let plan = plan_once(&scenario, grid)?;
    let dir = &args.out.dir;
    let r = &plan.result;

    let mut w = csv::Writer::from_writer(create(dir, "trajectory.csv")?);
    w.write_record(["k", "time_s", "x", "y", "z"])?;
    for (k, p) in r.trajectory.waypoints().iter().enumerate() {
        let t = r.trajectory.time_at(k);
        w.write_record([k.to_string(), fmt(t), fmt(p.x), fmt(p.y), fmt(p.z)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(dir, "costs.csv")?);
    w.write_record(["iteration", "total", "smooth", "obstacle", "occlusion", "shot"])?;
    for (i, b) in r.breakdown_history.iter().enumerate() {
        w.write_record([
            i.to_string(),
            fmt(b.total),
            fmt(b.smooth),
            fmt(b.obstacle),
            fmt(b.occlusion),
            fmt(b.shot),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(dir, "plot.csv")?);
    w.write_record([
        "k", "time_s", "drone_x", "drone_y", "drone_z", "actor_x", "actor_y", "actor_z", "shot_x",
        "shot_y", "shot_z",
    ])?;
    for k in 0..r.trajectory.len() {
        let mut row = vec![k.to_string(), fmt(r.trajectory.time_at(k))];
        for traj in [&r.trajectory, &plan.actor, &plan.shot] {
            row.extend(traj.waypoints()[k].iter().map(|c| fmt(*c)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    say(quiet, format!("termination {:?}", r.termination));
    say(quiet, format!("iterations {}", r.iterations));
    say(quiet, format!("final_cost {}", r.final_cost));
    if r.failed() {
        eprintln!("error: optimizer produced a non-finite cost");
        return Ok(EXIT_RUNTIME);
    }
    Ok(EXIT_OK)
}

fn cmd_sim(args: &ScenarioArgs, timing: bool, json: bool, quiet: bool) -> Result<i32> {
    let scenario = load(args)?;
    let grid = scenario.build_grid()?;
    let log = run_simulation_with_grid(&scenario, grid, &SimOptions { record_timing: timing })?;
    let dir = &args.out.dir;
    let mut f = create(dir, "sim.csv")?;
    log.write_csv(&mut f)?;
    f.flush()?;
    if json {
        let mut f = create(dir, "sim.json")?;
        log.write_json(&mut f)?;
        f.flush()?;
    }
    let dist = shot_distance_metric(&log)?;
    let mut summary = serde_json::json!({
        "replans": log.records.len(),
        "visibility_pct": visibility_metric(&log)?,
        "shot_distance_mean": dist.mean,
        "shot_distance_std": dist.std,
        "max_step_m": max_step_displacement(&log),
        "failed_replans": log.failed_replans(),
    });
    if timing {
        summary["median_solve_ms"] = log.median_solve_ms().into();
    }
    let text = serde_json::to_string_pretty(&summary)?;
    let mut f = create(dir, "summary.json")?;
    writeln!(f, "{text}")?;
    f.flush()?;
    say(quiet, text);
    Ok(if log.failed_replans() > 0 { EXIT_RUNTIME } else { EXIT_OK })
}

fn cmd_bench(cfg: &BenchmarkConfig, dir: &Path, quiet: bool) -> Result<i32> {
    let stats = benchmark_table1(cfg)?;
    let mut f = create(dir, "table.csv")?;
    stats.write_table_csv(&mut f)?;
    f.flush()?;
    let mut f = create(dir, "seeds.csv")?;
    stats.write_seeds_csv(&mut f)?;
    f.flush()?;
    for c in &stats.cells {
        say(
            quiet,
            format!(
                "{:<24} spheres {:>3}  visibility {:6.2} +- {:5.2} %  shot distance {:6.3} +- {:5.3} m  ({} runs, {} failed)",
                c.condition.label(),
                c.spheres,
                c.visibility_mean,
                c.visibility_std,
                c.shot_distance_mean,
                c.shot_distance_std,
                c.runs,
                c.failed
            ),
        );
    }
    let failed = stats.failed_runs();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", stats.seeds.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}
