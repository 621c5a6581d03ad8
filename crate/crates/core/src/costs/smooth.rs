use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::geom::{BoundaryCondition, Trajectory, Vec3};
use crate::shot::CostGrad;

/// Quadratic smoothness cost
/// `J = 1/(2(n-1)) * sum_axes (x^T A x + 2 x^T b) + c / (2(n-1))`
/// over the waypoint coordinates. Row and column 0 of `A` are zero: the
/// start waypoint is fixed and its coupling lives in `b` and `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessOperator {
    a: DMatrix<f64>,
    b: Vec<Vec3>,
    c: f64,
    dt: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Finite-difference smoothness over the sequence
/// `[x0 - v0*dt, x0, x1, ..., x_{n-1}]`; the virtual leading point carries the
/// start velocity. `weights[d-1]` weighs the squared order-`d` differences.
pub fn build_smoothness(
    n: usize,
    dt: f64,
    bc: &BoundaryCondition,
    weights: &[f64],
) -> Result<SmoothnessOperator> {
    if n < 3 {
        return Err(invalid("smoothness needs at least 3 waypoints"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("smoothness needs a positive time step"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("derivative weights must be non-negative"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(invalid("at least one derivative weight must be positive"));
    }
    if weights.len() >= n {
        return Err(invalid("derivative order exceeds the waypoint count"));
    }
    // extended index e: 0 -> virtual point, 1 -> x0, e -> x_{e-1}
    let fixed = [bc.start_position - bc.start_velocity * dt, bc.start_position];
    let mut a = DMatrix::zeros(n, n);
    let mut b = vec![Vec3::zeros(); n];
    let mut c = 0.0;
    for (order, &w) in weights.iter().enumerate().map(|(i, w)| (i + 1, w)) {
        if w == 0.0 {
            continue;
        }
        let scale = dt.powi(-(order as i32));
        let coeffs: Vec<f64> = (0..=order)
            .map(|m| {
                let sign = if (order - m) % 2 == 0 { 1.0 } else { -1.0 };
                sign * binomial(order, m) * scale
            })
            .collect();
        for row in 0..(n + 1 - order) {
            let mut free: Vec<(usize, f64)> = Vec::with_capacity(order + 1);
            let mut constant = Vec3::zeros();
            for (m, &coef) in coeffs.iter().enumerate() {
                let e = row + m;
                if e < 2 {
                    constant += fixed[e] * coef;
                } else {
                    free.push((e - 1, coef));
                }
            }
            for &(i, ci) in &free {
                for &(j, cj) in &free {
                    a[(i, j)] += w * ci * cj;
                }
                b[i] += constant * (w * ci);
            }
            c += w * constant.norm_squared();
        }
    }
    Ok(SmoothnessOperator { a, b, c, dt })
}

impl SmoothnessOperator {
    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The padded `n x n` matrix shared by the three axes.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &[Vec3] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn evaluate(&self, xi: &Trajectory) -> Result<CostGrad> {
        let n = self.n();
        if xi.len() != n {
            return Err(crate::error::Error::GridMismatch(format!(
                "smoothness built for {n} waypoints, trajectory has {}",
                xi.len()
            )));
        }
        let x = xi.waypoints();
        let scale = 1.0 / (n - 1) as f64;
        let mut quad = self.c;
        let mut gradient = vec![Vec3::zeros(); n];
        for i in 1..n {
            let mut ax = Vec3::zeros();
            for j in 1..n {
                let aij = self.a[(i, j)];
                if aij != 0.0 {
                    ax += x[j] * aij;
                }
            }
            quad += x[i].dot(&ax) + 2.0 * x[i].dot(&self.b[i]);
            gradient[i] = (ax + self.b[i]) * scale;
        }
        Ok(CostGrad { value: 0.5 * scale * quad, gradient })
    }
}
