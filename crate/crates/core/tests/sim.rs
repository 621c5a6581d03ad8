use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use approx::assert_relative_eq;
use cineplan::config::load_scenario;
use cineplan::forecast::NoiseParams;
use cineplan::optimizer::Termination;
use cineplan::shot::{ShotSchedule, ShotSpec};
use cineplan::sim::{
    max_step_displacement, random_environment, run_simulation, segment_visible,
    shot_distance_metric, visibility_metric, ActorScript, PlannerSettings, RandomEnvSpec,
    Scenario, SimLog, SimRecord, V_MAX,
};
use cineplan::tsdf::{Aabb, Environment, SphereObstacle};
use cineplan::{Error, Trajectory, Vec3};

fn scenario_file(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn open_field() -> Aabb {
    Aabb::new(Vec3::new(-25.0, -15.0, -6.0), Vec3::new(25.0, 15.0, 10.0)).unwrap()
}

#[test]
fn standing_actor_is_a_fixed_point() {
    let sc = Scenario {
        environment: Environment::empty(open_field()),
        actor: ActorScript::Still { position: Vec3::new(1.0, -2.0, 0.0), heading: 0.3 },
        shot: ShotSchedule::fixed(ShotSpec::new(6.0, FRAC_PI_2, 0.2).unwrap()),
        drone_start: None,
        replan_hz: 5.0,
        duration_s: 10.0,
        noise: NoiseParams { process_accel_std: 0.01, measurement_pos_std: 1e-3 },
        seed: 9,
        planner: PlannerSettings::default(),
    };
    let log = run_simulation(&sc).unwrap();
    for r in &log.records {
        let dist = (r.drone - sc.true_viewpoint(r.time_s)).norm();
        assert!(dist <= 0.1, "t = {}: {dist} m off the viewpoint", r.time_s);
    }
    assert_eq!(visibility_metric(&log).unwrap(), 100.0);
}

#[test]
fn reruns_are_identical() {
    let sc = load_scenario(scenario_file("occlusion_demo.toml")).unwrap();
    let sc = Scenario { duration_s: 6.0, ..sc };
    let a = run_simulation(&sc).unwrap();
    let b = run_simulation(&sc).unwrap();
    assert_eq!(a, b);
    let csv = |log: &SimLog| {
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(csv(&a), csv(&b));
    let other = run_simulation(&Scenario { seed: sc.seed + 1, ..sc.clone() }).unwrap();
    assert_ne!(csv(&a), csv(&other));
}

#[test]
fn log_is_time_ordered_and_continuous() {
    let sc = load_scenario(scenario_file("tracking.toml")).unwrap();
    let log = run_simulation(&sc).unwrap();
    assert_eq!(log.records.len(), (sc.duration_s * sc.replan_hz) as usize + 1);
    assert!(log.records.windows(2).all(|w| w[0].time_s < w[1].time_s));
    assert_eq!(log.failed_replans(), 0);
    assert!(max_step_displacement(&log) <= V_MAX / sc.replan_hz);
    assert_eq!(visibility_metric(&log).unwrap(), 100.0);
    // every plan starts where the drone was
    for r in &log.records {
        assert_eq!(r.plan.first(), r.drone);
    }
}

fn record(t: f64, drone: Vec3, actor: Vec3, shot: Vec3, env: &Environment) -> SimRecord {
    SimRecord {
        time_s: t,
        drone,
        actor_truth: actor,
        actor_estimate: actor,
        shot,
        costs: Default::default(),
        iterations: 0,
        solve_ms: 0.0,
        visible: segment_visible(env, &drone, &actor),
        termination: Termination::GradientTol,
        plan: Trajectory::from_fn(3, 1.0, t, |_| drone).unwrap(),
    }
}

fn log_of(env: Environment, path: impl Fn(f64) -> (Vec3, Vec3, Vec3), steps: usize) -> SimLog {
    let records = (0..steps)
        .map(|i| {
            let t = i as f64 * 0.2;
            let (d, a, s) = path(t);
            record(t, d, a, s, &env)
        })
        .collect();
    SimLog { records, environment: env, replan_hz: 5.0 }
}

#[test]
fn visibility_of_constructed_logs() {
    let wall = SphereObstacle::new(Vec3::new(0.0, 4.0, 0.0), 2.0).unwrap();
    let env = Environment::new(vec![wall], None, open_field()).unwrap();
    let actor = Vec3::zeros();

    let clear = log_of(Environment::empty(open_field()), |_| (Vec3::new(0.0, 8.0, 0.0), actor, actor), 20);
    assert_eq!(visibility_metric(&clear).unwrap(), 100.0);

    let hidden = log_of(env.clone(), |_| (Vec3::new(0.0, 8.0, 0.0), actor, actor), 20);
    assert_eq!(visibility_metric(&hidden).unwrap(), 0.0);

    // the drone flies along y = 8 at constant speed; the sphere hides the
    // actor while |x| < 16/sqrt(12). Half the run is spent in that shadow.
    let steps = 100;
    let shadow = 32.0 / 12f64.sqrt();
    let span = steps as f64 * 0.2;
    let half = log_of(env, |t| (Vec3::new(-shadow / 2.0 + 2.0 * shadow * t / span, 8.0, 0.0), actor, actor), steps);
    let expected = 50.0;
    let one_sample = 100.0 / steps as f64;
    assert!((visibility_metric(&half).unwrap() - expected).abs() <= one_sample);
}

#[test]
fn shot_distance_of_constructed_logs() {
    let env = Environment::empty(open_field());
    let exact = log_of(env.clone(), |t| (Vec3::new(t, 1.0, 0.0), Vec3::zeros(), Vec3::new(t, 1.0, 0.0)), 30);
    let s = shot_distance_metric(&exact).unwrap();
    assert_eq!((s.mean, s.std), (0.0, 0.0));

    let offset = log_of(env, |t| (Vec3::new(t, 3.0, 0.0), Vec3::zeros(), Vec3::new(t, 1.0, 0.0)), 30);
    let s = shot_distance_metric(&offset).unwrap();
    assert_relative_eq!(s.mean, 2.0, epsilon = 1e-12);
    assert!(s.std < 1e-12);

    let empty = SimLog { records: vec![], environment: Environment::empty(open_field()), replan_hz: 5.0 };
    assert!(matches!(visibility_metric(&empty), Err(Error::EmptyLog)));
    assert!(matches!(shot_distance_metric(&empty), Err(Error::EmptyLog)));
}

#[test]
fn shot_distance_matches_a_recount_from_the_csv() {
    let sc = load_scenario(scenario_file("occlusion_demo.toml")).unwrap();
    let log = run_simulation(&Scenario { duration_s: 8.0, ..sc }).unwrap();
    let mut bytes = Vec::new();
    log.write_csv(&mut bytes).unwrap();

    let mut rd = csv::Reader::from_reader(bytes.as_slice());
    let head = rd.headers().unwrap().clone();
    let col = |name: &str| head.iter().position(|h| h == name).unwrap();
    let (dx, sx) = (col("drone_x"), col("shot_x"));
    let mut dists = Vec::new();
    for row in rd.records() {
        let row = row.unwrap();
        let get = |i: usize| row[i].parse::<f64>().unwrap();
        let d = ((get(dx) - get(sx)).powi(2) + (get(dx + 1) - get(sx + 1)).powi(2) + (get(dx + 2) - get(sx + 2)).powi(2)).sqrt();
        dists.push(d);
    }
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let var = dists.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / dists.len() as f64;
    let s = shot_distance_metric(&log).unwrap();
    assert!((s.mean - mean).abs() <= 1e-9);
    assert!((s.std - var.sqrt()).abs() <= 1e-9);
}

fn corridor_spec() -> RandomEnvSpec {
    RandomEnvSpec {
        bounds: Aabb::new(Vec3::new(-25.0, -12.0, -4.0), Vec3::new(25.0, 12.0, 6.0)).unwrap(),
        radius_min: 1.0,
        radius_max: 3.0,
        ground_z: None,
        corridor_start: Vec3::new(-20.0, 0.0, 0.0),
        corridor_end: Vec3::new(20.0, 0.0, 0.0),
        corridor_radius: 1.5,
        drone_start: Vec3::new(-20.0, 7.8, 1.6),
        drone_clearance: 1.5,
        max_attempts: 1000,
    }
}

#[test]
fn random_worlds_keep_the_corridor_clear() {
    let spec = corridor_spec();
    assert!(random_environment(1, 0, &spec).unwrap().spheres.is_empty());
    assert_eq!(random_environment(5, 40, &spec).unwrap(), random_environment(5, 40, &spec).unwrap());
    for seed in 0..1000 {
        let env = random_environment(seed, 40, &spec).unwrap();
        assert_eq!(env.spheres.len(), 40);
        for s in &env.spheres {
            let a = spec.corridor_start;
            let ab = spec.corridor_end - a;
            let t = ((s.center - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            assert!((s.center - (a + ab * t)).norm() >= s.radius + spec.corridor_radius);
            assert!(s.radius >= spec.radius_min && s.radius <= spec.radius_max);
            assert!(spec.bounds.contains(&s.center));
        }
    }
}

#[test]
fn impossible_placement_is_reported() {
    let spec = RandomEnvSpec { corridor_radius: 100.0, max_attempts: 50, ..corridor_spec() };
    assert!(matches!(
        random_environment(1, 3, &spec),
        Err(Error::PlacementFailed { index: 0, attempts: 50 })
    ));
}
