//! Rigid and similarity transforms.
//!
//! Camera poses are stored camera-to-world: `world = R * cam + t`. Both
//! transforms use a right-multiplied local perturbation for optimisation,
//! `X' = X * exp(delta)`.

use std::ops::Mul;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};

/// Tangent vector of [`Sim3`]: `[rotation vector, translation, log scale]`.
pub type Sim3Tangent = nalgebra::SVector<f64, 7>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Applies the inverse transform without materialising it.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.translation))
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize_fast();
        PoseSE3 {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rotation = self.rotation.inverse();
        PoseSE3 {
            rotation,
            translation: -(rotation * self.translation),
        }
    }

    /// Right perturbation with `delta = [rho, theta]`: `R' = R Exp(theta)`,
    /// `t' = t + R rho`.
    pub fn retract(&self, delta: &Vector6<f64>) -> PoseSE3 {
        let rho = Vector3::new(delta[0], delta[1], delta[2]);
        let theta = Vector3::new(delta[3], delta[4], delta[5]);
        let mut rotation = self.rotation * UnitQuaternion::from_scaled_axis(theta);
        rotation.renormalize_fast();
        PoseSE3 {
            rotation,
            translation: self.translation + self.rotation * rho,
        }
    }

    /// Angle of the rotation part in radians.
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }
}

impl Mul for PoseSE3 {
    type Output = PoseSE3;

    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        self.compose(&rhs)
    }
}

/// Similarity transform: `p -> s R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3 {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl Default for Sim3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Sim3 {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// # Panics
    /// If `scale` is not strictly positive and finite.
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "Sim3 scale must be > 0, got {scale}");
        Self {
            rotation,
            translation,
            scale,
        }
    }

    pub fn from_se3(pose: &PoseSE3) -> Self {
        Self {
            rotation: pose.rotation,
            translation: pose.translation,
            scale: 1.0,
        }
    }

    /// Drops the scale.
    pub fn to_se3(&self) -> PoseSE3 {
        PoseSE3::new(self.rotation, self.translation)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    pub fn compose(&self, other: &Sim3) -> Sim3 {
        let mut rotation = self.rotation * other.rotation;
        rotation.renormalize_fast();
        Sim3 {
            rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> Sim3 {
        let rotation = self.rotation.inverse();
        let scale = 1.0 / self.scale;
        Sim3 {
            rotation,
            translation: -(scale * (rotation * self.translation)),
            scale,
        }
    }

    /// Applies this similarity to a camera pose (rotation and centre).
    pub fn transform_pose(&self, pose: &PoseSE3) -> PoseSE3 {
        let mut rotation = self.rotation * pose.rotation;
        rotation.renormalize_fast();
        PoseSE3::new(rotation, self.transform_point(&pose.translation))
    }

    /// Decoupled logarithm `[rotation vector, translation, ln scale]`.
    pub fn log(&self) -> Sim3Tangent {
        let w = self.rotation.scaled_axis();
        let t = self.translation;
        Sim3Tangent::from_column_slice(&[w.x, w.y, w.z, t.x, t.y, t.z, self.scale.ln()])
    }

    /// Inverse of [`Sim3::log`].
    pub fn exp(delta: &Sim3Tangent) -> Sim3 {
        Sim3 {
            rotation: UnitQuaternion::from_scaled_axis(Vector3::new(delta[0], delta[1], delta[2])),
            translation: Vector3::new(delta[3], delta[4], delta[5]),
            scale: delta[6].exp(),
        }
    }

    pub fn retract(&self, delta: &Sim3Tangent) -> Sim3 {
        self.compose(&Sim3::exp(delta))
    }
}

impl Mul for Sim3 {
    type Output = Sim3;

    fn mul(self, rhs: Sim3) -> Sim3 {
        self.compose(&rhs)
    }
}

/// Skew-symmetric cross-product matrix.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_pose() -> PoseSE3 {
        PoseSE3::new(
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(1.0, -2.0, 0.5),
        )
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = sample_pose();
        let id = p.inverse() * p;
        assert!(id.translation.norm() < 1e-12);
        assert!(id.rotation_angle() < 1e-12);
    }

    #[test]
    fn inverse_transform_matches_inverse() {
        let p = sample_pose();
        let x = Vector3::new(3.0, 4.0, -1.0);
        assert_relative_eq!(
            p.inverse_transform_point(&x),
            p.inverse().transform_point(&x),
            epsilon = 1e-12
        );
    }

    #[test]
    fn retract_zero_is_identity() {
        let p = sample_pose();
        let q = p.retract(&Vector6::zeros());
        assert_relative_eq!(q.translation, p.translation, epsilon = 1e-15);
        assert!(p.rotation.angle_to(&q.rotation) < 1e-15);
    }

    #[test]
    fn sim3_with_unit_scale_acts_like_se3() {
        let p = sample_pose();
        let s = Sim3::from_se3(&p);
        let x = Vector3::new(-0.5, 2.0, 7.0);
        assert_relative_eq!(s.transform_point(&x), p.transform_point(&x), epsilon = 1e-12);
    }

    #[test]
    fn sim3_log_exp_round_trip() {
        let s = Sim3::new(
            UnitQuaternion::from_euler_angles(0.1, 0.2, -0.4),
            Vector3::new(0.3, -1.0, 2.0),
            1.7,
        );
        let back = Sim3::exp(&s.log());
        assert_relative_eq!(back.scale, s.scale, epsilon = 1e-12);
        assert_relative_eq!(back.translation, s.translation, epsilon = 1e-12);
        assert!(back.rotation.angle_to(&s.rotation) < 1e-12);
    }

    #[test]
    #[should_panic]
    fn sim3_rejects_nonpositive_scale() {
        let _ = Sim3::new(UnitQuaternion::identity(), Vector3::zeros(), 0.0);
    }
}
