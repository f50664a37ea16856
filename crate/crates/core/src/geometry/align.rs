use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::Sim3;

/// Closed-form least-squares similarity (or rigid) transform.
#[derive(Clone, Copy, Debug)]
pub struct PointAlignment {
    /// Maps source points onto destination points.
    pub transform: Sim3,
    /// Singular values of the centred source spread, descending.
    pub source_spread: Vector3<f64>,
}

/// Umeyama alignment of `src` onto `dst`. Returns `None` for fewer than three
/// pairs or a degenerate configuration.
pub fn umeyama(src: &[Vector3<f64>], dst: &[Vector3<f64>], with_scale: bool) -> Option<PointAlignment> {
    let n = src.len();
    if n < 3 || n != dst.len() {
        return None;
    }
    let inv_n = 1.0 / n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_d = dst.iter().sum::<Vector3<f64>>() * inv_n;

    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let cs = s - mu_s;
        let cd = d - mu_d;
        cov += cd * cs.transpose();
        spread += cs * cs.transpose();
        var_s += cs.norm_squared();
    }
    cov *= inv_n;
    spread *= inv_n;
    var_s *= inv_n;
    if !(var_s > 0.0) {
        return None;
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut sign = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * sign[(0, 0)] + d[1] * sign[(1, 1)] + d[2] * sign[(2, 2)]) / var_s
    } else {
        1.0
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let rotation = UnitQuaternion::from_matrix(&r);
    let translation = mu_d - scale * (rotation * mu_s);

    let mut sv = spread.symmetric_eigenvalues();
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    Some(PointAlignment {
        transform: Sim3 {
            rotation,
            translation,
            scale,
        },
        source_spread: sv.map(|x| x.max(0.0).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cloud() -> Vec<Vector3<f64>> {
        (0..20)
            .map(|i| {
                let f = i as f64;
                Vector3::new(f.sin() * 3.0, (f * 0.7).cos() * 2.0, f * 0.1 - 1.0)
            })
            .collect()
    }

    #[test]
    fn recovers_exact_similarity() {
        let truth = Sim3::new(
            UnitQuaternion::from_euler_angles(0.2, -0.5, 2.0),
            Vector3::new(4.0, -1.0, 0.5),
            2.0,
        );
        let src = cloud();
        let dst: Vec<_> = src.iter().map(|p| truth.transform_point(p)).collect();
        let a = umeyama(&src, &dst, true).unwrap().transform;
        assert_relative_eq!(a.scale, 2.0, epsilon = 1e-9);
        assert_relative_eq!(a.translation, truth.translation, epsilon = 1e-9);
        assert!(a.rotation.angle_to(&truth.rotation) < 1e-9);
    }

    #[test]
    fn rigid_mode_keeps_unit_scale() {
        let src = cloud();
        let dst: Vec<_> = src.iter().map(|p| p * 3.0).collect();
        let a = umeyama(&src, &dst, false).unwrap().transform;
        assert_eq!(a.scale, 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(umeyama(&[p, p, p], &[p, p, p], true).is_none());
        assert!(umeyama(&[p, p], &[p, p], true).is_none());
    }
}
