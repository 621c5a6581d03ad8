//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the cost or optimizer internals: finite
//! differences, the quadratic minimum and the occlusion double integral are
//! recomputed from their definitions.

#![allow(dead_code)]

use std::sync::Arc;

use cineplan::costs::{build_smoothness, CostContext, SmoothnessOperator};
use cineplan::tsdf::{build_tsdf, Aabb, Environment, SphereObstacle, TsdfGrid};
use cineplan::{BoundaryCondition, Trajectory, Vec3};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SPHERE_RADIUS: f64 = 2.0;

/// One sphere of radius 2 at the origin, mapped at 0.25 m.
pub fn single_sphere_env() -> Environment {
    let bounds = Aabb::new(Vec3::new(-12.0, -12.0, -8.0), Vec3::new(12.0, 12.0, 8.0)).unwrap();
    let sphere = SphereObstacle::new(Vec3::zeros(), SPHERE_RADIUS).unwrap();
    Environment::new(vec![sphere], None, bounds).unwrap()
}

pub fn single_sphere_grid() -> Arc<TsdfGrid> {
    Arc::new(build_tsdf(&single_sphere_env(), 0.25, 3.0).unwrap())
}

/// Drone trajectory skirting the sphere on the `-y` side, with random
/// wiggles so no two draws share a shape.
pub fn random_drone(rng: &mut ChaCha8Rng, n: usize, horizon: f64) -> Trajectory {
    let x0 = rng.random_range(-4.0..-2.0);
    let x1 = rng.random_range(2.0..4.0);
    let y = rng.random_range(-3.2..-1.5);
    let z = rng.random_range(-0.8..0.8);
    let amp: Vec<f64> = (0..6).map(|_| rng.random_range(-0.4..0.4)).collect();
    Trajectory::from_fn(n, horizon, 0.0, |t| {
        let s = t / horizon;
        Vec3::new(
            x0 + (x1 - x0) * s + amp[0] * (3.0 * s).sin(),
            y + amp[1] * (5.0 * s).sin() + amp[2] * s * s,
            z + amp[3] * (4.0 * s).cos() + amp[4] * s + amp[5] * (7.0 * s).sin(),
        )
    })
    .unwrap()
}

/// Actor walking along `+x` behind the sphere, so every sightline from
/// [`random_drone`] grazes or crosses it.
pub fn actor_behind(n: usize, horizon: f64) -> Trajectory {
    Trajectory::from_fn(n, horizon, 0.0, |t| Vec3::new(-2.0 + 0.4 * t, 4.5, 0.2)).unwrap()
}

pub fn context(grid: Arc<TsdfGrid>, actor: Trajectory) -> CostContext {
    CostContext::new(grid, actor)
}

/// Central differences of `f` over every waypoint coordinate.
pub fn fd_gradient(xi: &Trajectory, h: f64, f: impl Fn(&Trajectory) -> f64) -> Vec<Vec3> {
    let base = xi.waypoints().to_vec();
    let rebuild = |pts: Vec<Vec3>| Trajectory::new(pts, xi.horizon_s(), xi.start_time_s()).unwrap();
    (0..base.len())
        .map(|k| {
            let mut g = Vec3::zeros();
            for a in 0..3 {
                let mut plus = base.clone();
                plus[k][a] += h;
                let mut minus = base.clone();
                minus[k][a] -= h;
                g[a] = (f(&rebuild(plus)) - f(&rebuild(minus))) / (2.0 * h);
            }
            g
        })
        .collect()
}

/// `|a - b| / |b|` over the stacked vectors.
pub fn relative_error(a: &[Vec3], b: &[Vec3]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum();
    (num / den).sqrt()
}

pub fn cosine(a: &Vec3, b: &Vec3) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Hinge penalty written out again for the oracles.
pub fn hinge(d: f64, eps: f64) -> f64 {
    if d < 0.0 {
        -d + eps / 2.0
    } else if d <= eps {
        (d - eps).powi(2) / (2.0 * eps)
    } else {
        0.0
    }
}

/// Smoothness cost of `xi` summed directly from the difference definition
/// over `[x0 - v0 dt, x0, ..., x_{n-1}]`, scaled by `1/(2(n-1))`.
pub fn smoothness_direct(xi: &[Vec3], dt: f64, bc: &BoundaryCondition, weights: &[f64]) -> f64 {
    let n = xi.len();
    let mut ext = vec![bc.start_position - bc.start_velocity * dt, bc.start_position];
    ext.extend_from_slice(&xi[1..]);
    let mut total = 0.0;
    for (d, &w) in weights.iter().enumerate().map(|(i, w)| (i + 1, w)) {
        let mut seq = ext.clone();
        for _ in 0..d {
            seq = seq.windows(2).map(|p| (p[1] - p[0]) / dt).collect();
        }
        total += w * seq.iter().map(|v| v.norm_squared()).sum::<f64>();
    }
    total / (2.0 * (n - 1) as f64)
}

/// Minimizer of `J_smooth + lambda3 J_shot` over the free waypoints, found by
/// assembling the normal equations from the difference definition and
/// solving them with an LU decomposition. Returns the minimizing waypoints.
pub fn quadratic_minimum(
    n: usize,
    dt: f64,
    bc: &BoundaryCondition,
    weights: &[f64],
    lambda3: f64,
    shot: &[Vec3],
) -> Vec<Vec3> {
    let free = n - 1;
    // extended sequence e = [virtual, x0, x1..x_{n-1}] = F z + c per axis,
    // z the free coordinates
    let len = n + 1;
    let mut h = DMatrix::<f64>::zeros(free, free);
    let mut rhs = vec![DVector::<f64>::zeros(free); 3];
    for (d, &w) in weights.iter().enumerate().map(|(i, w)| (i + 1, w)) {
        // order-d difference operator on the extended sequence
        let mut op = DMatrix::<f64>::identity(len, len);
        for _ in 0..d {
            let rows = op.nrows() - 1;
            let mut diff = DMatrix::<f64>::zeros(rows, op.nrows());
            for r in 0..rows {
                diff[(r, r)] = -1.0 / dt;
                diff[(r, r + 1)] = 1.0 / dt;
            }
            op = diff * op;
        }
        let f = op.columns(2, free).into_owned();
        let fixed = [bc.start_position - bc.start_velocity * dt, bc.start_position];
        h += f.transpose() * &f * w;
        for a in 0..3 {
            let c = op.column(0) * fixed[0][a] + op.column(1) * fixed[1][a];
            rhs[a] -= f.transpose() * c * w;
        }
    }
    for i in 0..free {
        h[(i, i)] += lambda3;
        for a in 0..3 {
            rhs[a][i] += lambda3 * shot[i + 1][a];
        }
    }
    let lu = h.lu();
    let sol: Vec<DVector<f64>> = rhs.iter().map(|r| lu.solve(r).unwrap()).collect();
    std::iter::once(bc.start_position)
        .chain((0..free).map(|i| Vec3::new(sol[0][i], sol[1][i], sol[2][i])))
        .collect()
}

/// `J_smooth + lambda3 J_shot` from the definitions.
pub fn quadratic_cost(
    xi: &[Vec3],
    dt: f64,
    bc: &BoundaryCondition,
    weights: &[f64],
    lambda3: f64,
    shot: &[Vec3],
) -> f64 {
    let n = xi.len();
    let shot_term: f64 =
        (1..n).map(|k| (xi[k] - shot[k]).norm_squared()).sum::<f64>() / (2.0 * (n - 1) as f64);
    smoothness_direct(xi, dt, bc, weights) + lambda3 * shot_term
}

pub fn smoothness(n: usize, horizon: f64, bc: &BoundaryCondition, w: &[f64]) -> SmoothnessOperator {
    build_smoothness(n, horizon / (n - 1) as f64, bc, w).unwrap()
}

/// Occlusion cost of continuous camera and actor paths as a double integral:
/// composite Simpson in time over `t_nodes` intervals, midpoint rule over
/// `tau_nodes` along each sightline, analytic camera speed.
pub fn occlusion_double_integral(
    grid: &TsdfGrid,
    eps: f64,
    horizon: f64,
    camera: impl Fn(f64) -> Vec3,
    camera_velocity: impl Fn(f64) -> Vec3,
    actor: impl Fn(f64) -> Vec3,
    t_nodes: usize,
    tau_nodes: usize,
) -> f64 {
    assert!(t_nodes % 2 == 0);
    let ht = horizon / t_nodes as f64;
    let sightline = |t: f64| {
        let q = camera(t);
        let l = actor(t) - q;
        let dtau = 1.0 / tau_nodes as f64;
        let inner: f64 = (0..tau_nodes)
            .map(|j| hinge(grid.distance(&(q + l * ((j as f64 + 0.5) * dtau))), eps))
            .sum();
        inner * dtau * l.norm() * camera_velocity(t).norm()
    };
    let mut sum = sightline(0.0) + sightline(horizon);
    for i in 1..t_nodes {
        let wgt = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += wgt * sightline(i as f64 * ht);
    }
    sum * ht / 3.0
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}
