use std::collections::HashMap;

use crate::geometry::Sim3;
use crate::slam::MapState;

/// Replaces the poses of `keyframes` by the scale-free part of
/// `corrected` and moves every point anchored to one of them by that
/// keyframe's `corrected * old^-1`.
pub fn correct_map(map: &mut MapState, keyframes: &[usize], old: &[Sim3], corrected: &[Sim3]) {
    assert!(keyframes.len() == old.len() && old.len() == corrected.len());
    let delta: HashMap<usize, Sim3> = keyframes
        .iter()
        .zip(old.iter().zip(corrected))
        .map(|(k, (o, c))| (*k, *c * o.inverse()))
        .collect();
    for p in &mut map.points {
        if let Some(d) = delta.get(&p.reference_keyframe) {
            p.position = d.transform_point(&p.position);
        }
    }
    for (k, c) in keyframes.iter().zip(corrected) {
        map.keyframes[*k].pose = c.to_se3();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PixelCoord, PoseSE3};
    use crate::slam::{KeyObservation, Keyframe, PointOrigin};
    use nalgebra::{UnitQuaternion, Vector3};

    fn map() -> MapState {
        let mut m = MapState::new();
        for k in 0..3 {
            let obs = vec![KeyObservation {
                descriptor: 0,
                pixel: PixelCoord::new(0.0, 0.0),
                bearing: Vector3::z(),
            }];
            m.keyframes.push(Keyframe::new(k, k as f64, PoseSE3::from_translation(Vector3::new(k as f64, 0.0, 0.0)), obs));
        }
        for k in 0..3 {
            m.add_point(Vector3::new(k as f64, 1.0, 5.0), k as u64, PointOrigin::DepthCreated, Some(5.0), k, k);
        }
        m
    }

    #[test]
    fn identity_correction_changes_nothing() {
        let mut m = map();
        let before = m.snapshot();
        let old: Vec<Sim3> = m.keyframes.iter().map(|k| Sim3::from_se3(&k.pose)).collect();
        correct_map(&mut m, &[0, 1, 2], &old, &old.clone());
        assert_eq!(m.snapshot(), before);
    }

    #[test]
    fn rigid_shift_moves_points_identically() {
        let mut m = map();
        let old: Vec<Sim3> = m.keyframes.iter().map(|k| Sim3::from_se3(&k.pose)).collect();
        let shift = Sim3::new(UnitQuaternion::identity(), Vector3::new(2.0, -1.0, 0.5), 1.0);
        let new: Vec<Sim3> = old.iter().map(|o| shift * *o).collect();
        let before: Vec<_> = m.points.iter().map(|p| p.position).collect();
        correct_map(&mut m, &[0, 1, 2], &old, &new);
        for (p, b) in m.points.iter().zip(before) {
            assert!((p.position - b - Vector3::new(2.0, -1.0, 0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn points_outside_the_corrected_set_stay() {
        let mut m = map();
        let old = vec![Sim3::from_se3(&m.keyframes[2].pose)];
        let new = vec![Sim3::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 1.0), 1.1)];
        let p0 = m.points[0].position;
        correct_map(&mut m, &[2], &old, &new);
        assert_eq!(m.points[0].position, p0);
        // anchored point keeps its coordinates relative to the keyframe, scaled
        let rel_old = old[0].inverse().transform_point(&Vector3::new(2.0, 1.0, 5.0));
        let expected = new[0].transform_point(&rel_old);
        assert!((m.points[2].position - expected).norm() < 1e-12);
        assert_eq!(m.keyframes[2].pose.translation, Vector3::new(0.0, 0.0, 1.0));
    }
}
