use std::collections::HashSet;

use super::frame::{Frame, TrackedMatches};
use super::map::{MapState, PointOrigin};
use super::residual::angular_error;
use crate::geometry::{triangulate, PanoramicCamera, DEFAULT_PARALLAX_MIN};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MappingConfig {
    /// Minimum angle between the two rays, radians.
    pub parallax_min: f64,
    /// Largest angular error of a triangulated point in either view, degrees.
    pub max_reprojection_deg: f64,
    /// How many earlier keyframes are searched for a partner observation.
    pub search_keyframes: usize,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            parallax_min: DEFAULT_PARALLAX_MIN,
            max_reprojection_deg: 1.0,
            search_keyframes: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MappingStats {
    pub depth_created: usize,
    pub triangulated: usize,
}

/// Creates points for the unmatched observations of keyframe `kf` (already
/// inserted for `frame`). Inside the overlap the refined depth is
/// unprojected; elsewhere the observation is triangulated against the
/// nearest earlier keyframe holding the same descriptor. New points are
/// linked to the keyframe and written into `matches`.
pub fn map_new_points(
    frame: &Frame,
    matches: &mut TrackedMatches,
    kf: usize,
    map: &mut MapState,
    camera: &PanoramicCamera,
    config: &MappingConfig,
) -> MappingStats {
    let mut stats = MappingStats::default();
    let pose = map.keyframes[kf].pose;
    let gate = config.max_reprojection_deg.to_radians();
    let mut used: HashSet<u64> = matches
        .matched()
        .map(|(i, _)| frame.observations[i].descriptor_id)
        .collect();
    for slot in 0..frame.observations.len() {
        if matches.get(slot).is_some() {
            continue;
        }
        let desc = frame.observations[slot].descriptor_id;
        if !used.insert(desc) {
            continue;
        }
        let bearing = frame.bearings[slot];
        if frame.in_overlap(slot, camera) {
            if let Some(d) = frame.depth_at(slot, camera) {
                let p = pose.transform_point(&(bearing * d));
                let id = map.add_point(p, desc, PointOrigin::DepthCreated, Some(d), frame.index, kf);
                map.link(kf, slot, id);
                matches.set(slot, Some(id));
                stats.depth_created += 1;
                continue;
            }
        }
        let partner = (kf.saturating_sub(config.search_keyframes)..kf)
            .rev()
            .find_map(|k| map.keyframes[k].slot_of(desc).map(|s| (k, s)));
        let Some((k, s)) = partner else { continue };
        let other = &map.keyframes[k];
        if other.points[s].is_some() {
            continue;
        }
        let other_bearing = other.observations[s].bearing;
        let other_pose = other.pose;
        let Ok(p) = triangulate(&other_pose, &other_bearing, &pose, &bearing, config.parallax_min) else {
            continue;
        };
        if angular_error(&pose, &p, &bearing) > gate || angular_error(&other_pose, &p, &other_bearing) > gate {
            continue;
        }
        let id = map.add_point(p, desc, PointOrigin::Triangulated, None, frame.index, kf);
        map.link(k, s, id);
        map.link(kf, slot, id);
        matches.set(slot, Some(id));
        stats.triangulated += 1;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_refine::DenseDepthMap;
    use crate::geometry::PoseSE3;
    use crate::sensor_sim::{Observation, PixelMask, SparseDepthMap};
    use crate::slam::keyframe::insert_keyframe;
    use nalgebra::{UnitQuaternion, Vector3};

    fn cam() -> PanoramicCamera {
        PanoramicCamera::new(512, 256).unwrap()
    }

    fn frame(index: usize, pose: PoseSE3, pts: &[(u64, Vector3<f64>)], depth: DenseDepthMap, mask: PixelMask) -> Frame {
        let c = cam();
        let obs = pts
            .iter()
            .map(|(id, p)| Observation {
                landmark_id: *id,
                pixel: c.project(&pose.inverse_transform_point(p)).unwrap(),
                descriptor_id: *id,
            })
            .collect();
        let mut f = Frame::new(index, index as f64, obs, SparseDepthMap::empty(512, 256), depth, mask, &c).unwrap();
        f.pose = pose;
        f
    }

    #[test]
    fn depth_created_point_lies_on_the_ray() {
        let c = cam();
        let pose = PoseSE3::new(UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0));
        let target = pose.transform_point(&Vector3::new(2.0, 1.0, 6.0));
        let px = c.project(&pose.inverse_transform_point(&target)).unwrap();
        let (col, row) = c.pixel_index(&px).unwrap();
        let mut mask = PixelMask::new(512, 256);
        for dc in 0..3 {
            for dr in 0..3 {
                mask.set(col + dc - 1, row + dr - 1, true);
            }
        }
        let f = frame(0, pose, &[(9, target)], DenseDepthMap::from_values(512, 256, vec![10.0; 512 * 256]), mask);
        let mut map = MapState::new();
        let mut m = TrackedMatches::new(1);
        let kf = insert_keyframe(&f, &m, &mut map);
        let stats = map_new_points(&f, &mut m, kf, &mut map, &c, &MappingConfig::default());
        assert_eq!(stats.depth_created, 1);
        let p = &map.points[0];
        let expected = pose.transform_point(&(f.bearings[0] * 10.0));
        assert!((p.position - expected).norm() < 1e-12);
        // round trip: range from the creating pose equals the sampled depth
        assert!((pose.inverse_transform_point(&p.position).norm() - 10.0).abs() < 1e-9);
        assert_eq!(p.last_assoc_depth, Some(10.0));
        assert_eq!(p.last_assoc_frame, Some(0));
        assert_eq!(m.get(0), Some(0));
    }

    #[test]
    fn triangulates_against_earlier_keyframe() {
        let c = cam();
        let truth = Vector3::new(3.0, 0.5, 20.0);
        let p0 = PoseSE3::identity();
        // baseline chosen for a little over two degrees of parallax
        let p1 = PoseSE3::from_translation(Vector3::new(0.8, 0.0, 0.0));
        let none = || (DenseDepthMap::new(512, 256), PixelMask::new(512, 256));
        let mut map = MapState::new();
        let (d, m0) = none();
        let f0 = frame(0, p0, &[(4, truth)], d, m0);
        insert_keyframe(&f0, &TrackedMatches::new(1), &mut map);
        let (d, m1) = none();
        let f1 = frame(1, p1, &[(4, truth)], d, m1);
        let mut m = TrackedMatches::new(1);
        let kf = insert_keyframe(&f1, &m, &mut map);
        let stats = map_new_points(&f1, &mut m, kf, &mut map, &c, &MappingConfig::default());
        assert_eq!(stats.triangulated, 1);
        // noiseless pixels: both rays pass through the true point
        assert!((map.points[0].position - truth).norm() < 1e-6);
        assert_eq!(map.points[0].observations, vec![(0, 0), (1, 0)]);
        assert_eq!(map.keyframes[0].points[0], Some(0));
    }

    #[test]
    fn unseen_outside_overlap_creates_nothing() {
        let c = cam();
        let (d, mk) = (DenseDepthMap::new(512, 256), PixelMask::new(512, 256));
        let f = frame(0, PoseSE3::identity(), &[(1, Vector3::new(0.0, 0.0, 10.0))], d, mk);
        let mut map = MapState::new();
        let mut m = TrackedMatches::new(1);
        let kf = insert_keyframe(&f, &m, &mut map);
        let s = map_new_points(&f, &mut m, kf, &mut map, &c, &MappingConfig::default());
        assert_eq!(s, MappingStats::default());
        assert!(map.is_empty());
    }
}
