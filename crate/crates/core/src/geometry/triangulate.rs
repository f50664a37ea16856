use nalgebra::Vector3;

use super::PoseSE3;

/// Default minimum parallax between the two viewing rays (1 degree).
pub const DEFAULT_PARALLAX_MIN: f64 = std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TriangulationFailure {
    /// Angle between the world-frame rays is below the configured minimum.
    LowParallax { parallax: f64 },
    /// The closest-approach point lies behind one of the cameras.
    BehindCamera,
}

/// Angle in radians between two vectors.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Midpoint of the common perpendicular of two rays.
///
/// Bearings are unit vectors in each camera's frame; poses are
/// camera-to-world.
pub fn triangulate(
    pose_a: &PoseSE3,
    bearing_a: &Vector3<f64>,
    pose_b: &PoseSE3,
    bearing_b: &Vector3<f64>,
    parallax_min: f64,
) -> Result<Vector3<f64>, TriangulationFailure> {
    let da = pose_a.transform_vector(bearing_a);
    let db = pose_b.transform_vector(bearing_b);
    let parallax = angle_between(&da, &db);
    if !(parallax >= parallax_min) {
        return Err(TriangulationFailure::LowParallax { parallax });
    }
    let ca = pose_a.translation;
    let cb = pose_b.translation;
    let w0 = ca - cb;
    let a = da.dot(&da);
    let b = da.dot(&db);
    let c = db.dot(&db);
    let d = da.dot(&w0);
    let e = db.dot(&w0);
    let denom = a * c - b * b;
    let s = (b * e - c * d) / denom;
    let t = (a * e - b * d) / denom;
    if !(s > 0.0 && t > 0.0) {
        return Err(TriangulationFailure::BehindCamera);
    }
    Ok(((ca + da * s) + (cb + db * t)) * 0.5)
}
