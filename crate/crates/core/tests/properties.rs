use std::sync::Arc;

use cineplan::costs::{build_smoothness, occlusion_cost, occlusion_gradient, CostContext};
use cineplan::forecast::{kf_predict, kf_update, ActorState, NoiseParams};
use cineplan::geom::{finite_diff_acceleration, finite_diff_velocity, time_shift};
use cineplan::optimizer::build_metric;
use cineplan::shot::shot_cost;
use cineplan::sim::{gimbal_angles, project};
use cineplan::tsdf::{build_tsdf, Aabb, Environment, SphereObstacle, TsdfGrid};
use cineplan::{BoundaryCondition, Execution, Trajectory, Vec3};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn waypoints(n: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(10.0), n)
}

fn sphere_world() -> impl Strategy<Value = Environment> {
    prop::collection::vec((vec3(3.0), 0.5..2.5f64), 1..4).prop_map(|s| {
        let bounds = Aabb::new(Vec3::new(-6.0, -6.0, -6.0), Vec3::new(6.0, 6.0, 6.0)).unwrap();
        let spheres = s.into_iter().map(|(c, r)| SphereObstacle::new(c, r).unwrap()).collect();
        Environment::new(spheres, None, bounds).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn differences_exact_on_low_degree(c in vec3(5.0), b in vec3(5.0), a in vec3(5.0), dt in 0.05..1.0f64) {
        let line = Trajectory::from_fn(9, 8.0 * dt, 0.0, |t| c + b * t).unwrap();
        for v in finite_diff_velocity(&line).unwrap() {
            prop_assert!((v - b).norm() <= 1e-9 * (1.0 + b.norm()) / dt);
        }
        let parabola = Trajectory::from_fn(9, 8.0 * dt, 0.0, |t| c + b * t + a * t * t).unwrap();
        for acc in finite_diff_acceleration(&parabola).unwrap() {
            prop_assert!((acc - a * 2.0).norm() <= 1e-7 * (1.0 + c.norm() + b.norm() + a.norm()) / (dt * dt));
        }
    }

    #[test]
    fn time_shift_keeps_the_grid(pts in waypoints(11), elapsed in 0.0..5.0f64, v in vec3(2.0)) {
        let traj = Trajectory::new(pts, 5.0, 1.0).unwrap();
        let shifted = time_shift(&traj, elapsed, v).unwrap();
        prop_assert_eq!(shifted.len(), traj.len());
        prop_assert_eq!(shifted.horizon_s(), traj.horizon_s());
        prop_assert_eq!(shifted.dt(), traj.dt());
        let same = time_shift(&traj, 0.0, v).unwrap();
        prop_assert_eq!(same.waypoints(), traj.waypoints());
    }

    #[test]
    fn smoothness_matrix_is_psd(pts in waypoints(15), v0 in vec3(2.0), w2 in 0.0..3.0f64) {
        let bc = BoundaryCondition::new(pts[0], v0).unwrap();
        let op = build_smoothness(15, 0.3, &bc, &[1.0, w2]).unwrap();
        for axis in 0..3 {
            let x = nalgebra::DVector::from_iterator(15, pts.iter().map(|p| p[axis]));
            prop_assert!((x.transpose() * op.a() * &x)[(0, 0)] >= -1e-9);
        }
    }

    #[test]
    fn metric_step_is_a_descent_direction(g in waypoints(15), lambda3 in 0.0..10.0f64) {
        let bc = BoundaryCondition::at_rest(Vec3::zeros());
        let op = build_smoothness(15, 0.3, &bc, &[1.0]).unwrap();
        let metric = build_metric(&op, lambda3).unwrap();
        let d = metric.solve(&g);
        let dot: f64 = g.iter().zip(&d).skip(1).map(|(a, b)| a.dot(b)).sum();
        prop_assert!(dot >= 0.0);
        prop_assert_eq!(d[0], Vec3::zeros());
    }

    #[test]
    fn shot_cost_is_translation_paired_and_linear(q in waypoints(9), s in waypoints(9), shift in vec3(5.0), delta in waypoints(9)) {
        let mk = |p: Vec<Vec3>| Trajectory::new(p, 4.0, 0.0).unwrap();
        let base = shot_cost(&mk(q.clone()), &mk(s.clone())).unwrap();
        let moved = shot_cost(
            &mk(q.iter().map(|p| p + shift).collect()),
            &mk(s.iter().map(|p| p + shift).collect()),
        ).unwrap();
        prop_assert!((base.value - moved.value).abs() <= 1e-9 * (1.0 + base.value));

        let stepped = shot_cost(&mk(q.iter().zip(&delta).map(|(p, d)| p + d).collect()), &mk(s)).unwrap();
        for k in 1..9 {
            let diff = stepped.gradient[k] - base.gradient[k];
            prop_assert!((diff - delta[k] / 8.0).norm() <= 1e-12 * (1.0 + delta[k].norm()));
        }
    }

    #[test]
    fn tsdf_tracks_the_analytic_field(env in sphere_world(), probes in prop::collection::vec(vec3(5.5), 50)) {
        let res = 0.25;
        let trunc = 2.0;
        let grid = build_tsdf(&env, res, trunc).unwrap();
        for p in &probes {
            let exact = env.signed_distance(p).clamp(-trunc, trunc);
            prop_assert!((grid.distance(p) - exact).abs() <= res);
        }
        let bytes = grid.to_bytes();
        let back = TsdfGrid::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn covariance_stays_psd(
        fixes in prop::collection::vec(vec3(20.0), 1..40),
        accel in 0.1..3.0f64,
        meas in 0.05..3.0f64,
        dt in 0.01..1.0f64,
    ) {
        let noise = NoiseParams { process_accel_std: accel, measurement_pos_std: meas };
        let mut s = ActorState::from_first_fix(Vec3::zeros(), 0.0, 0.0, &noise, 2.0).unwrap();
        for f in fixes {
            s = kf_predict(&s, dt, &noise).unwrap();
            s = kf_update(&s, f, &noise).unwrap();
            let c = s.covariance;
            prop_assert!((c - c.transpose()).abs().max() <= 1e-9 * (1.0 + c.abs().max()));
            prop_assert!(c.symmetric_eigenvalues().min() >= -1e-9);
            prop_assert!(s.heading > -std::f64::consts::PI && s.heading <= std::f64::consts::PI);
        }
    }

    #[test]
    fn gimbal_round_trip(drone in vec3(20.0), actor in vec3(20.0), sx in 0.1..0.9f64, sy in 0.1..0.9f64) {
        prop_assume!((drone - actor).norm() > 0.5);
        let fov = (1.2, 0.8);
        if let Ok((pan, tilt)) = gimbal_angles(&drone, &actor, (sx, sy), fov) {
            let (px, py) = project(&drone, &actor, pan, tilt, fov).unwrap();
            prop_assert!((px - sx).abs() <= 1e-6 && (py - sy).abs() <= 1e-6);
        }
    }
}

#[test]
fn parallel_cost_evaluation_matches_sequential() {
    let bounds = Aabb::new(Vec3::new(-12.0, -12.0, -8.0), Vec3::new(12.0, 12.0, 8.0)).unwrap();
    let env = Environment::new(vec![SphereObstacle::new(Vec3::zeros(), 2.0).unwrap()], None, bounds).unwrap();
    let grid = Arc::new(build_tsdf(&env, 0.25, 3.0).unwrap());
    let actor = Trajectory::from_fn(51, 10.0, 0.0, |t| Vec3::new(-2.0 + 0.4 * t, 4.5, 0.0)).unwrap();
    let xi = Trajectory::from_fn(51, 10.0, 0.0, |t| Vec3::new(-3.0 + 0.6 * t, -3.0, 0.2 * t.sin())).unwrap();
    let mut ctx = CostContext::new(grid, actor);
    let seq = (occlusion_cost(&xi, &ctx).unwrap(), occlusion_gradient(&xi, &ctx).unwrap());
    ctx.execution = Execution::Parallel;
    let par = (occlusion_cost(&xi, &ctx).unwrap(), occlusion_gradient(&xi, &ctx).unwrap());
    assert!(seq.0 > 0.0);
    assert_eq!(seq, par);
}
