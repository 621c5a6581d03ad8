//! Truncated signed distance fields on a regular voxel grid.
//!
//! Voxel `(i, j, k)` has its center at `origin + resolution * (i, j, k)` and
//! values are stored x-fastest. Queries interpolate trilinearly between the
//! eight surrounding voxel centers; the gradient is the exact derivative of
//! that interpolant. Space outside the grid reads as free (`+truncation`).
//!
//! # File layout (`.tsdf`, all fields little-endian)
//!
//! | offset | size | field                      |
//! |-------:|-----:|----------------------------|
//! | 0      | 8    | magic `TSDFGRID`           |
//! | 8      | 4    | version, `u32` = 1         |
//! | 12     | 24   | origin, 3 x `f64`          |
//! | 36     | 8    | resolution, `f64`          |
//! | 44     | 12   | dims, 3 x `u32`            |
//! | 56     | 8    | truncation, `f64`          |
//! | 64     | 4*N  | values, `f32`, x-fastest   |

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{is_finite, Vec3};

pub const MAGIC: &[u8; 8] = b"TSDFGRID";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 64;

/// Default guard against accidentally huge grids (about 200 MB of values).
pub const DEFAULT_VOXEL_CAP: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereObstacle {
    pub center: Vec3,
    pub radius: f64,
}

impl SphereObstacle {
    pub fn new(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid(format!("sphere radius must be positive, got {radius}")));
        }
        if !is_finite(&center) {
            return Err(Error::NonFinite("sphere center"));
        }
        Ok(Self { center, radius })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.center).norm() - self.radius
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if !(is_finite(&self.min) && is_finite(&self.max)) {
            return Err(Error::NonFinite("bounds"));
        }
        if (0..3).any(|a| self.max[a] <= self.min[a]) {
            return Err(invalid(format!(
                "degenerate bounds {:?} .. {:?}",
                self.min.as_slice(),
                self.max.as_slice()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// Synthetic world: floating spheres and an optional ground half-space
/// `z < ground_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    #[serde(default)]
    pub spheres: Vec<SphereObstacle>,
    #[serde(default)]
    pub ground_z: Option<f64>,
    pub bounds: Aabb,
}

impl Environment {
    pub fn new(spheres: Vec<SphereObstacle>, ground_z: Option<f64>, bounds: Aabb) -> Result<Self> {
        let env = Self { spheres, ground_z, bounds };
        env.validate()?;
        Ok(env)
    }

    pub fn empty(bounds: Aabb) -> Self {
        Self { spheres: Vec::new(), ground_z: None, bounds }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        for (i, s) in self.spheres.iter().enumerate() {
            SphereObstacle::new(s.center, s.radius)?;
            if !self.bounds.contains(&s.center) {
                return Err(invalid(format!("sphere {i} center lies outside the bounds")));
            }
        }
        if let Some(g) = self.ground_z {
            if !g.is_finite() {
                return Err(Error::NonFinite("ground height"));
            }
        }
        Ok(())
    }

    /// Exact signed distance to the nearest obstacle; `+inf` in an empty world.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let ground = self.ground_z.map_or(f64::INFINITY, |g| p.z - g);
        self.spheres
            .iter()
            .map(|s| s.signed_distance(p))
            .fold(ground, f64::min)
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let env: Environment = toml::from_str(text).map_err(|e| e.to_string())?;
        env.validate().map_err(|e| e.to_string())?;
        Ok(env)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsdfGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    truncation: f64,
    values: Vec<f32>,
}

impl TsdfGrid {
    /// Assembles a grid from raw parts, checking every invariant.
    pub fn from_parts(
        origin: Vec3,
        resolution: f64,
        dims: [usize; 3],
        truncation: f64,
        values: Vec<f32>,
    ) -> Result<Self> {
        check_geometry(resolution, truncation)?;
        if !is_finite(&origin) {
            return Err(Error::NonFinite("grid origin"));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(invalid(format!("grid dims must each be >= 2, got {dims:?}")));
        }
        let count = dims.iter().product::<usize>();
        if values.len() != count {
            return Err(invalid(format!(
                "expected {count} voxel values, got {}",
                values.len()
            )));
        }
        let t = truncation as f32;
        if let Some(bad) = values.iter().position(|v| !(v.is_finite() && v.abs() <= t)) {
            return Err(invalid(format!("voxel {bad} outside [-truncation, truncation]")));
        }
        Ok(Self { origin, resolution, dims, truncation, values })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn voxel_count(&self) -> usize {
        self.values.len()
    }

    pub fn memory_bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<f32>()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn voxel(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)] as f64
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.resolution
    }

    /// Continuous voxel coordinates clamped onto the voxel-center lattice, or
    /// `None` when `p` lies more than half a voxel outside it. The flags mark
    /// axes that were clamped (the field is flat along them).
    fn lattice_coords(&self, p: &Vec3) -> Option<([usize; 3], [f64; 3], [bool; 3])> {
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut clamped = [false; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.resolution;
            let top = (self.dims[a] - 1) as f64;
            if !(u >= -0.5 && u <= top + 0.5) {
                return None;
            }
            let uc = if u < 0.0 || u > top {
                clamped[a] = true;
                u.clamp(0.0, top)
            } else {
                u
            };
            let i = (uc.floor() as usize).min(self.dims[a] - 2);
            cell[a] = i;
            frac[a] = uc - i as f64;
        }
        Some((cell, frac, clamped))
    }

    /// True if `p` is inside the queryable region.
    pub fn contains(&self, p: &Vec3) -> bool {
        self.lattice_coords(p).is_some()
    }

    /// Interpolated distance and its gradient, or `None` outside the grid.
    pub fn query(&self, p: &Vec3) -> Option<(f64, Vec3)> {
        let ([i, j, k], [fx, fy, fz], clamped) = self.lattice_coords(p)?;
        let nx = self.dims[0];
        let nxy = nx * self.dims[1];
        let base = i + nx * j + nxy * k;
        let v = |off: usize| self.values[base + off] as f64;
        let c000 = v(0);
        let c100 = v(1);
        let c010 = v(nx);
        let c110 = v(nx + 1);
        let c001 = v(nxy);
        let c101 = v(nxy + 1);
        let c011 = v(nxy + nx);
        let c111 = v(nxy + nx + 1);

        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        let value = c0 + (c1 - c0) * fz;

        let dx0 = (c100 - c000) + ((c110 - c010) - (c100 - c000)) * fy;
        let dx1 = (c101 - c001) + ((c111 - c011) - (c101 - c001)) * fy;
        let dx = dx0 + (dx1 - dx0) * fz;
        let dy = (c10 - c00) + ((c11 - c01) - (c10 - c00)) * fz;
        let dz = c1 - c0;

        let mut grad = Vec3::new(dx, dy, dz) / self.resolution;
        for a in 0..3 {
            if clamped[a] {
                grad[a] = 0.0;
            }
        }
        Some((value, grad))
    }

    /// Interpolated signed distance; `+truncation` outside the grid.
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.query(p).map_or(self.truncation, |(d, _)| d)
    }

    /// Gradient of [`TsdfGrid::distance`]; zero outside the grid.
    pub fn distance_gradient(&self, p: &Vec3) -> Vec3 {
        self.query(p).map_or_else(Vec3::zeros, |(_, g)| g)
    }

    /// Writes the grid in the `.tsdf` binary layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for a in 0..3 {
            out.extend_from_slice(&self.origin[a].to_le_bytes());
        }
        out.extend_from_slice(&self.resolution.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.truncation.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..8] != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let origin = Vec3::new(f64_at(12), f64_at(20), f64_at(28));
        let resolution = f64_at(36);
        let dims = [u32_at(44) as usize, u32_at(48) as usize, u32_at(52) as usize];
        let truncation = f64_at(56);
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let payload = &bytes[HEADER_LEN..];
        match count.and_then(|c| c.checked_mul(4)) {
            Some(len) if len == payload.len() => {}
            _ => {
                return Err(Error::Format(format!(
                    "header declares dims {dims:?} but payload holds {} bytes",
                    payload.len()
                )))
            }
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_parts(origin, resolution, dims, truncation, values)
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn check_geometry(resolution: f64, truncation: f64) -> Result<()> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(invalid(format!("resolution must be positive, got {resolution}")));
    }
    if !(truncation.is_finite() && truncation >= resolution) {
        return Err(invalid(format!(
            "truncation {truncation} must be at least the resolution {resolution}"
        )));
    }
    Ok(())
}

/// Voxel counts per axis for `bounds` at `resolution`.
pub fn grid_dims(bounds: &Aabb, resolution: f64) -> [usize; 3] {
    let e = bounds.extent();
    [0, 1, 2].map(|a| ((e[a] / resolution).ceil() as usize + 1).max(2))
}

/// Builds the clamped analytic distance field of `env` over its bounds.
pub fn build_tsdf(env: &Environment, resolution: f64, truncation: f64) -> Result<TsdfGrid> {
    build_tsdf_capped(env, resolution, truncation, DEFAULT_VOXEL_CAP)
}

pub fn build_tsdf_capped(
    env: &Environment,
    resolution: f64,
    truncation: f64,
    voxel_cap: u64,
) -> Result<TsdfGrid> {
    check_geometry(resolution, truncation)?;
    env.validate()?;
    let dims = grid_dims(&env.bounds, resolution);
    let requested = dims.iter().map(|&d| d as u64).product::<u64>();
    if requested > voxel_cap {
        return Err(Error::VoxelCap { requested, cap: voxel_cap });
    }
    let origin = env.bounds.min;
    let [nx, ny, nz] = dims;

    // Every obstacle only matters inside its truncation band, so start from
    // "free" and lower voxels obstacle by obstacle.
    let mut field = vec![truncation; nx * ny * nz];
    if let Some(g) = env.ground_z {
        for k in 0..nz {
            let d = (origin.z + k as f64 * resolution - g).min(truncation);
            if d < truncation {
                let slab = &mut field[k * nx * ny..(k + 1) * nx * ny];
                slab.iter_mut().for_each(|v| *v = v.min(d));
            }
        }
    }
    for s in &env.spheres {
        let reach = s.radius + truncation;
        let range = |a: usize, n: usize| {
            let lo = ((s.center[a] - reach - origin[a]) / resolution).floor().max(0.0) as usize;
            let hi = ((s.center[a] + reach - origin[a]) / resolution).ceil();
            let hi = if hi < 0.0 { 0 } else { (hi as usize + 1).min(n) };
            lo..hi.max(lo)
        };
        let (ri, rj, rk) = (range(0, nx), range(1, ny), range(2, nz));
        for k in rk {
            let z = origin.z + k as f64 * resolution;
            for j in rj.clone() {
                let y = origin.y + j as f64 * resolution;
                let row = nx * (j + ny * k);
                for i in ri.clone() {
                    let p = Vec3::new(origin.x + i as f64 * resolution, y, z);
                    let d = s.signed_distance(&p);
                    let v = &mut field[row + i];
                    if d < *v {
                        *v = d;
                    }
                }
            }
        }
    }
    let values = field
        .into_iter()
        .map(|d| d.clamp(-truncation, truncation) as f32)
        .collect();
    TsdfGrid::from_parts(origin, resolution, dims, truncation, values)
}
