use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::Vec3;
use crate::tsdf::{Aabb, Environment, SphereObstacle};

/// Sampling rules for random sphere worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomEnvSpec {
    pub bounds: Aabb,
    pub radius_min: f64,
    pub radius_max: f64,
    #[serde(default)]
    pub ground_z: Option<f64>,
    /// Spheres may not come within `corridor_radius` of this segment.
    pub corridor_start: Vec3,
    pub corridor_end: Vec3,
    pub corridor_radius: f64,
    /// Spheres keep this clearance from the drone start.
    pub drone_start: Vec3,
    pub drone_clearance: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    1000
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() > 0.0 {
        ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Places `n_spheres` uniformly random spheres, redrawing any that touch the
/// actor corridor or the drone start.
pub fn random_environment(seed: u64, n_spheres: usize, spec: &RandomEnvSpec) -> Result<Environment> {
    if !(spec.radius_min > 0.0 && spec.radius_max >= spec.radius_min) {
        return Err(invalid("radius range must satisfy 0 < min <= max"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (spec.bounds.min, spec.bounds.max);
    let mut spheres = Vec::with_capacity(n_spheres);
    for index in 0..n_spheres {
        let mut placed = None;
        for _ in 0..spec.max_attempts {
            let c = Vec3::new(
                rng.random_range(lo.x..=hi.x),
                rng.random_range(lo.y..=hi.y),
                rng.random_range(lo.z..=hi.z),
            );
            let r = rng.random_range(spec.radius_min..=spec.radius_max);
            let corridor = segment_distance(&c, &spec.corridor_start, &spec.corridor_end);
            if corridor < r + spec.corridor_radius {
                continue;
            }
            if (c - spec.drone_start).norm() < r + spec.drone_clearance {
                continue;
            }
            placed = Some(SphereObstacle::new(c, r)?);
            break;
        }
        spheres.push(placed.ok_or(Error::PlacementFailed { index, attempts: spec.max_attempts })?);
    }
    Environment::new(spheres, spec.ground_z, spec.bounds)
}
