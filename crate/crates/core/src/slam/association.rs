use super::frame::{Frame, TrackedMatches};
use super::map::{MapPoint, MapState, PointOrigin};
use crate::error::{Error, Result};
use crate::geometry::PanoramicCamera;

/// Default association distance threshold, meters.
pub const DEFAULT_THETA: f64 = 2.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AssociationStats {
    /// Matched slots inside the overlap with a depth sample.
    pub considered: usize,
    pub updated: usize,
}

/// Update rule for one point: the candidate must lie within `theta`, and
/// either the point is triangulated and never depth-updated, or the new
/// depth is smaller than the one that last placed it.
pub fn should_update(point: &MapPoint, distance: f64, depth: f64, theta: f64) -> bool {
    if !(distance < theta) {
        return false;
    }
    let first = point.origin == PointOrigin::Triangulated && !point.depth_modified;
    let closer = point.last_assoc_depth.is_some_and(|d| depth < d);
    first || closer
}

/// Moves tracked points onto the refined depth of the current frame where
/// the update rule allows it. `reference_keyframe` becomes the anchor of
/// every moved point.
pub fn depth_associate(
    frame: &Frame,
    matches: &TrackedMatches,
    map: &mut MapState,
    theta: f64,
    camera: &PanoramicCamera,
    reference_keyframe: usize,
) -> Result<AssociationStats> {
    if !(theta > 0.0) {
        return Err(Error::InvalidInput(format!("association threshold must be positive, got {theta}")));
    }
    let mut stats = AssociationStats::default();
    for (slot, id) in matches.matched() {
        let Some(d) = frame.depth_at(slot, camera) else { continue };
        stats.considered += 1;
        let newp = frame.pose.transform_point(&(frame.bearings[slot] * d));
        let point = &mut map.points[id];
        if should_update(point, (point.position - newp).norm(), d, theta) {
            point.position = newp;
            point.depth_modified = true;
            point.last_assoc_depth = Some(d);
            point.last_assoc_frame = Some(frame.index);
            point.reference_keyframe = reference_keyframe;
            stats.updated += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_refine::DenseDepthMap;
    use crate::geometry::PoseSE3;
    use crate::sensor_sim::{Observation, PixelMask, SparseDepthMap};
    use nalgebra::Vector3;

    fn point(origin: PointOrigin, modified: bool, last: Option<f64>) -> MapPoint {
        MapPoint {
            id: 0,
            position: Vector3::zeros(),
            descriptor: 0,
            origin,
            depth_modified: modified,
            last_assoc_depth: last,
            last_assoc_frame: last.map(|_| 0),
            reference_keyframe: 0,
            observations: vec![],
            last_seen: 0,
        }
    }

    #[test]
    fn rule_table() {
        // (within theta, triangulated-and-unmodified, depth decreasing) -> update
        let theta = 2.0;
        for near in [false, true] {
            for fresh in [false, true] {
                for decreasing in [false, true] {
                    let p = if fresh {
                        point(PointOrigin::Triangulated, false, Some(8.0))
                    } else {
                        point(PointOrigin::DepthCreated, false, Some(8.0))
                    };
                    let depth = if decreasing { 6.0 } else { 12.0 };
                    let dist = if near { 0.5 } else { 3.0 };
                    let expected = near && (fresh || decreasing);
                    assert_eq!(should_update(&p, dist, depth, theta), expected, "{near} {fresh} {decreasing}");
                }
            }
        }
        // a triangulated point that was already moved follows the depth rule
        let moved = point(PointOrigin::Triangulated, true, Some(8.0));
        assert!(!should_update(&moved, 0.5, 12.0, theta));
        assert!(should_update(&moved, 0.5, 6.0, theta));
        // never associated and triangulated: first rule applies
        assert!(should_update(&point(PointOrigin::Triangulated, false, None), 1.99, 50.0, theta));
        assert!(!should_update(&point(PointOrigin::Triangulated, false, None), 2.0, 50.0, theta));
    }

    fn one_point_frame(depth: f64, index: usize) -> (Frame, PanoramicCamera) {
        let cam = PanoramicCamera::new(64, 32).unwrap();
        let px = cam.pixel_center(20, 16);
        let obs = vec![Observation {
            landmark_id: 0,
            pixel: px,
            descriptor_id: 0,
        }];
        let mut f = Frame::new(
            index,
            0.0,
            obs,
            SparseDepthMap::empty(64, 32),
            DenseDepthMap::from_values(64, 32, vec![depth; 64 * 32]),
            PixelMask::full(64, 32),
            &cam,
        )
        .unwrap();
        f.pose = PoseSE3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        (f, cam)
    }

    #[test]
    fn triangulated_point_moves_within_theta() {
        let (f, cam) = one_point_frame(10.0, 3);
        let newp = f.pose.transform_point(&(f.bearings[0] * 10.0));
        let mut map = MapState::new();
        map.add_point(newp + Vector3::new(0.3, 0.4, 0.0), 0, PointOrigin::Triangulated, None, 0, 0);
        let m = TrackedMatches::from_slots(vec![Some(0)]).unwrap();
        let s = depth_associate(&f, &m, &mut map, 2.0, &cam, 1).unwrap();
        assert_eq!(s, AssociationStats { considered: 1, updated: 1 });
        let p = &map.points[0];
        assert!((p.position - newp).norm() < 1e-12);
        assert!(p.depth_modified);
        assert_eq!((p.last_assoc_depth, p.last_assoc_frame, p.reference_keyframe), (Some(10.0), Some(3), 1));
    }

    #[test]
    fn far_candidate_and_outside_overlap_are_ignored() {
        let (mut f, cam) = one_point_frame(10.0, 3);
        let newp = f.pose.transform_point(&(f.bearings[0] * 10.0));
        let mut map = MapState::new();
        let start = newp + Vector3::new(3.0, 0.0, 0.0);
        map.add_point(start, 0, PointOrigin::Triangulated, None, 0, 0);
        let m = TrackedMatches::from_slots(vec![Some(0)]).unwrap();
        depth_associate(&f, &m, &mut map, 2.0, &cam, 1).unwrap();
        assert_eq!(map.points[0].position, start);
        map.points[0].position = newp;
        f.overlap = PixelMask::new(64, 32);
        let s = depth_associate(&f, &m, &mut map, 2.0, &cam, 1).unwrap();
        assert_eq!(s.considered, 0);
        assert!(!map.points[0].depth_modified);
    }

    #[test]
    fn rejects_non_positive_theta() {
        let (f, cam) = one_point_frame(10.0, 0);
        let mut map = MapState::new();
        let m = TrackedMatches::new(1);
        assert!(depth_associate(&f, &m, &mut map, 0.0, &cam, 0).is_err());
    }
}
