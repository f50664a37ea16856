//! Angular bearing residuals shared by tracking and bundle adjustment.

use nalgebra::{Matrix2x3, Matrix3, SMatrix, Vector2, Vector3};

use crate::geometry::{skew, PoseSE3};

/// Orthonormal basis of the plane perpendicular to a unit bearing, stored
/// as the rows of a 2x3 matrix.
pub fn tangent_basis(b: &Vector3<f64>) -> Matrix2x3<f64> {
    let a = if b.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = b.cross(&a).normalize();
    let e2 = b.cross(&e1);
    Matrix2x3::from_rows(&[e1.transpose(), e2.transpose()])
}

/// Residual of the predicted bearing of `p_world` against the observed
/// bearing, in the observed bearing's tangent plane (radians for small
/// errors). Returns the residual, its Jacobian with respect to the camera
/// point, and the camera point.
pub fn bearing_residual(
    pose: &PoseSE3,
    p_world: &Vector3<f64>,
    observed: &Vector3<f64>,
    basis: &Matrix2x3<f64>,
) -> Option<(Vector2<f64>, Matrix2x3<f64>, Vector3<f64>)> {
    let q = pose.inverse_transform_point(p_world);
    let n = q.norm();
    if !(n > 1e-9) {
        return None;
    }
    let qh = q / n;
    let r = basis * (qh - observed);
    let j = basis * ((Matrix3::identity() - qh * qh.transpose()) / n);
    Some((r, j, q))
}

/// Jacobian of the camera point with respect to the right-perturbation
/// `[rho, theta]` of a camera-to-world pose.
pub fn camera_point_pose_jacobian(q: &Vector3<f64>) -> SMatrix<f64, 3, 6> {
    let mut j = SMatrix::<f64, 3, 6>::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-Matrix3::identity()));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(q));
    j
}

/// Angle between the predicted and observed bearings.
pub fn angular_error(pose: &PoseSE3, p_world: &Vector3<f64>, observed: &Vector3<f64>) -> f64 {
    let q = pose.inverse_transform_point(p_world);
    crate::geometry::angle_between(&q, observed)
}

/// Huber cost of a residual norm and its IRLS weight.
pub fn huber(r_norm: f64, delta: f64) -> (f64, f64) {
    if r_norm <= delta {
        (r_norm * r_norm, 1.0)
    } else {
        (2.0 * delta * r_norm - delta * delta, delta / r_norm)
    }
}
