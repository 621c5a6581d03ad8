//! Pan/tilt that put the actor at a chosen image position.
//!
//! Camera frame: forward `(cos t cos p, cos t sin p, sin t)`, right
//! `(sin p, -cos p, 0)`, up completing the frame. Image coordinates run from
//! the top-left corner, so `(0.5, 0.5)` is the image center.

use crate::error::{invalid, Error, Result};
use crate::geom::{is_finite, Vec3};

fn frame(pan: f64, tilt: f64) -> [Vec3; 3] {
    let (sp, cp) = pan.sin_cos();
    let (st, ct) = tilt.sin_cos();
    let forward = Vec3::new(ct * cp, ct * sp, st);
    let right = Vec3::new(sp, -cp, 0.0);
    let up = Vec3::new(-st * cp, -st * sp, ct);
    [right, up, forward]
}

/// Image position of `actor` seen from `drone` with the given gimbal angles
/// and fields of view. `None` when the actor is behind the camera.
pub fn project(drone: &Vec3, actor: &Vec3, pan: f64, tilt: f64, fov: (f64, f64)) -> Option<(f64, f64)> {
    let [r, u, f] = frame(pan, tilt);
    let w = actor - drone;
    let z = w.dot(&f);
    if z <= 0.0 {
        return None;
    }
    let tx = w.dot(&r) / z;
    let ty = w.dot(&u) / z;
    Some((0.5 + tx / (2.0 * (fov.0 / 2.0).tan()), 0.5 - ty / (2.0 * (fov.1 / 2.0).tan())))
}

/// `(pan, tilt)` placing `actor` at `screen_pos` in the image.
pub fn gimbal_angles(drone: &Vec3, actor: &Vec3, screen_pos: (f64, f64), fov: (f64, f64)) -> Result<(f64, f64)> {
    if !(is_finite(drone) && is_finite(actor)) {
        return Err(Error::NonFinite("gimbal input"));
    }
    let (fh, fv) = fov;
    if !(fh > 0.0 && fh < std::f64::consts::PI && fv > 0.0 && fv < std::f64::consts::PI) {
        return Err(invalid("fields of view must lie in (0, pi)"));
    }
    let w = actor - drone;
    let len = w.norm();
    if len == 0.0 {
        return Err(invalid("drone and actor coincide"));
    }
    let tx = (screen_pos.0 - 0.5) * 2.0 * (fh / 2.0).tan();
    let ty = (0.5 - screen_pos.1) * 2.0 * (fv / 2.0).tan();
    let norm = (1.0 + tx * tx + ty * ty).sqrt();
    let s = w.z / len * norm / (1.0 + ty * ty).sqrt();
    if s.abs() > 1.0 {
        return Err(invalid("image position unreachable for this elevation"));
    }
    let tilt = s.asin() - ty.atan();
    let pan = w.y.atan2(w.x) - (-tx).atan2(tilt.cos() - ty * tilt.sin());
    Ok((crate::forecast::normalize_angle(pan), tilt))
}
