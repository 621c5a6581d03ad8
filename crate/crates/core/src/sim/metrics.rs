use serde::{Deserialize, Serialize};

use super::SimLog;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::tsdf::Environment;

/// Points tested along each camera-actor segment.
pub const VISIBILITY_SAMPLES: usize = 64;

/// True when no sample strictly between camera and actor lies inside an
/// obstacle of `env`. The endpoints themselves are not tested.
pub fn segment_visible(env: &Environment, camera: &Vec3, actor: &Vec3) -> bool {
    let m = VISIBILITY_SAMPLES;
    (1..m - 1).all(|j| {
        let tau = j as f64 / (m - 1) as f64;
        env.signed_distance(&(camera + (actor - camera) * tau)) >= 0.0
    })
}

/// Fraction of replans, in percent, with an unobstructed view of the actor.
pub fn visibility_metric(log: &SimLog) -> Result<f64> {
    if log.records.is_empty() {
        return Err(Error::EmptyLog);
    }
    let seen = log.records.iter().filter(|r| r.visible).count();
    Ok(100.0 * seen as f64 / log.records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl DistanceStats {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

/// Distance between the drone and the concurrent ideal viewpoint.
pub fn shot_distance_metric(log: &SimLog) -> Result<DistanceStats> {
    let d: Vec<f64> = log.records.iter().map(|r| (r.drone - r.shot).norm()).collect();
    DistanceStats::of(&d).ok_or(Error::EmptyLog)
}

/// Largest drone displacement between consecutive replans.
pub fn max_step_displacement(log: &SimLog) -> f64 {
    log.records
        .windows(2)
        .map(|w| (w[1].drone - w[0].drone).norm())
        .fold(0.0, f64::max)
}
