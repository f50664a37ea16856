use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{umeyama, Sim3};
use crate::slam::{angular_error, estimate_pose, MapState, PointOrigin, TrackingConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopConfig {
    /// Shared descriptors required between query and match keyframes.
    pub min_shared: usize,
    /// Frame-index separation required between query and match.
    pub min_separation: usize,
    /// Weight of loop edges relative to odometry edges.
    pub loop_weight: f64,
    pub max_iterations: usize,
    /// Angular agreement required of a shared point with the query's
    /// bearing under the estimated relative pose, degrees.
    pub bearing_tolerance_deg: f64,
    /// Largest accepted distance between the query and match cameras.
    pub max_distance: f64,
    /// Frames to wait after a closure before detecting again.
    pub cooldown: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            min_shared: 30,
            min_separation: 50,
            loop_weight: 100.0,
            max_iterations: 50,
            bearing_tolerance_deg: 1.0,
            max_distance: 10.0,
            cooldown: 50,
        }
    }
}

/// A detected revisit: `relative` maps query-camera coordinates into
/// match-camera coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopCandidate {
    /// Keyframe indices.
    pub query: usize,
    pub matched: usize,
    pub shared: usize,
    pub inliers: usize,
    pub relative: Sim3,
}

/// Pairs of distinct points sharing a descriptor in the two keyframes,
/// expressed in each keyframe's camera frame, with the query's bearing.
struct SharedPairs {
    src: Vec<Vector3<f64>>,
    dst: Vec<Vector3<f64>>,
    bearings: Vec<Vector3<f64>>,
    /// Both points carry sensor depth.
    metric: Vec<bool>,
}

fn shared_points(map: &MapState, query: usize, other: usize) -> SharedPairs {
    let q = &map.keyframes[query];
    let o = &map.keyframes[other];
    let mut pairs = SharedPairs {
        src: Vec::new(),
        dst: Vec::new(),
        bearings: Vec::new(),
        metric: Vec::new(),
    };
    for (slot, id) in q.points.iter().enumerate() {
        let Some(id) = id else { continue };
        let Some(s) = o.slot_of(q.observations[slot].descriptor) else { continue };
        let Some(other_id) = o.points[s] else { continue };
        if other_id == *id {
            continue;
        }
        pairs.src.push(q.pose.inverse_transform_point(&map.points[*id].position));
        pairs.dst.push(o.pose.inverse_transform_point(&map.points[other_id].position));
        pairs.bearings.push(q.observations[slot].bearing);
        let has_depth = |id: usize| {
            let p = &map.points[id];
            p.depth_modified || p.origin == PointOrigin::DepthCreated
        };
        pairs.metric.push(has_depth(*id) && has_depth(other_id));
    }
    pairs
}

fn shared_count(map: &MapState, query: usize, other: usize) -> usize {
    let q = &map.keyframes[query];
    let o = &map.keyframes[other];
    q.points
        .iter()
        .enumerate()
        .filter(|(slot, id)| {
            id.is_some_and(|id| {
                o.slot_of(q.observations[*slot].descriptor)
                    .and_then(|s| o.points[s])
                    .is_some_and(|other| other != id)
            })
        })
        .count()
}

const MIN_METRIC_PAIRS: usize = 10;

/// Consensus over minimal three-pair similarity fits. A pair agrees when
/// its residual is within a fraction of its range.
fn ransac_inliers(pairs: &SharedPairs, seed: u64) -> Option<Vec<usize>> {
    const TRIALS: usize = 300;
    const RELATIVE_TOLERANCE: f64 = 0.05;
    const MIN_TOLERANCE: f64 = 0.3;
    let n = pairs.src.len();
    if n < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inliers_of = |t: &Sim3| -> Vec<usize> {
        (0..n)
            .filter(|i| {
                let d = pairs.dst[*i];
                (t.transform_point(&pairs.src[*i]) - d).norm() <= (RELATIVE_TOLERANCE * d.norm()).max(MIN_TOLERANCE)
            })
            .collect()
    };
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..TRIALS {
        let idx = rand::seq::index::sample(&mut rng, n, 3);
        let s: Vec<_> = idx.iter().map(|i| pairs.src[i]).collect();
        let d: Vec<_> = idx.iter().map(|i| pairs.dst[i]).collect();
        let Some(fit) = umeyama(&s, &d, true) else { continue };
        let inl = inliers_of(&fit.transform);
        if inl.len() > best.len() {
            best = inl;
        }
    }
    // refit on the consensus set and take its agreeing pairs
    let s: Vec<_> = best.iter().map(|i| pairs.src[*i]).collect();
    let d: Vec<_> = best.iter().map(|i| pairs.dst[*i]).collect();
    let refit = umeyama(&s, &d, true)?;
    let keep = inliers_of(&refit.transform);
    (keep.len() >= 3).then_some(keep)
}

/// Searches keyframes at least `min_separation` frames older than `query`
/// for the one sharing the most descriptors, then aligns the shared points
/// with a similarity transform found by consensus and refined on the
/// query's bearings.
pub fn detect_loop(map: &MapState, query: usize, config: &LoopConfig) -> Option<LoopCandidate> {
    let qframe = map.keyframes[query].frame;
    let mut best: Option<(usize, usize)> = None;
    for k in 0..query {
        if map.keyframes[k].frame + config.min_separation > qframe {
            break;
        }
        let n = shared_count(map, query, k);
        if n >= config.min_shared && best.is_none_or(|(_, m)| n > m) {
            best = Some((k, n));
        }
    }
    let (matched, shared) = best?;
    let (relative, inliers) = relative_pose(map, query, matched, config)?;
    Some(LoopCandidate {
        query,
        matched,
        shared,
        inliers,
        relative,
    })
}

/// Similarity mapping `query` camera coordinates into `other` camera
/// coordinates, with the number of shared points agreeing with it.
fn relative_pose(map: &MapState, query: usize, other: usize, config: &LoopConfig) -> Option<(Sim3, usize)> {
    let pairs = shared_points(map, query, other);
    let consensus = ransac_inliers(&pairs, query as u64)?;
    let src: Vec<_> = consensus.iter().map(|i| pairs.src[*i]).collect();
    let dst: Vec<_> = consensus.iter().map(|i| pairs.dst[*i]).collect();
    let fit = umeyama(&src, &dst, true)?;
    // a flat or linear point set cannot fix all seven degrees of freedom
    if !(fit.source_spread[2] > 1e-3 * fit.source_spread[0]) {
        return None;
    }
    // bearings constrain rotation and translation far better than point
    // depths, which degrade with range
    let tracking = TrackingConfig::default();
    let mut keep = consensus;
    let mut pose = fit.transform.to_se3();
    for _ in 0..2 {
        let b: Vec<_> = keep.iter().map(|i| pairs.bearings[*i]).collect();
        let d: Vec<_> = keep.iter().map(|i| pairs.dst[*i]).collect();
        pose = estimate_pose(&b, &d, &pose, &tracking);
        keep = (0..pairs.src.len())
            .filter(|i| angular_error(&pose, &pairs.dst[*i], &pairs.bearings[*i]) <= config.bearing_tolerance_deg.to_radians())
            .collect();
        if keep.len() < config.min_shared {
            return None;
        }
    }
    // with sensor depth at both ends the map is metric and the closure
    // carries no scale change; otherwise range ratios, weighted towards
    // near points, give the scale
    let metric = keep.iter().filter(|i| pairs.metric[**i]).count();
    let scale = if metric >= MIN_METRIC_PAIRS {
        1.0
    } else {
        let mut ratios: Vec<(f64, f64)> = keep
            .iter()
            .map(|i| {
                let (src, dst) = (pairs.src[*i].norm(), (pairs.dst[*i] - pose.translation).norm());
                (dst / src, 1.0 / (src * dst))
            })
            .collect();
        ratios.sort_by(|a, b| a.0.total_cmp(&b.0));
        let half = 0.5 * ratios.iter().map(|r| r.1).sum::<f64>();
        let mut acc = 0.0;
        ratios
            .iter()
            .find(|r| {
                acc += r.1;
                acc >= half
            })
            .map_or(1.0, |r| r.0)
    };
    if !(0.5..=2.0).contains(&scale) {
        return None;
    }
    if pose.translation.norm() > config.max_distance {
        return None;
    }
    Some((Sim3::new(pose.rotation, pose.translation, scale), keep.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PixelCoord, PoseSE3};
    use crate::slam::{KeyObservation, Keyframe, PointOrigin};
    use nalgebra::UnitQuaternion;
    use rand::Rng;

    /// Keyframe at frame 0 and a revisit at `frame`, sharing `shared`
    /// landmarks. The revisit's copies of the points (and its pose) carry a
    /// similarity drift, scaled by 1.03 unless the points have sensor depth.
    fn revisit_with(shared: usize, frame: usize, origin: PointOrigin) -> (MapState, Sim3) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth: Vec<Vector3<f64>> = (0..shared)
            .map(|_| Vector3::new(rng.random_range(-15.0..15.0), rng.random_range(-3.0..3.0), rng.random_range(5.0..30.0)))
            .collect();
        let scale = if origin == PointOrigin::DepthCreated { 1.0 } else { 1.03 };
        let drift = Sim3::new(UnitQuaternion::from_euler_angles(0.0, 0.05, 0.0), Vector3::new(4.0, 0.0, -2.0), scale);
        let pose0 = PoseSE3::identity();
        let pose1_true = PoseSE3::from_translation(Vector3::new(0.5, 0.0, 0.2));
        let pose1 = drift.transform_pose(&pose1_true);
        let obs = |pose: &PoseSE3| -> Vec<KeyObservation> {
            truth
                .iter()
                .enumerate()
                .map(|(i, p)| KeyObservation {
                    descriptor: i as u64,
                    pixel: PixelCoord::new(0.0, 0.0),
                    bearing: pose.inverse_transform_point(p).normalize(),
                })
                .collect()
        };
        let mut map = MapState::new();
        map.keyframes.push(Keyframe::new(0, 0.0, pose0, obs(&pose0)));
        map.keyframes.push(Keyframe::new(frame, 1.0, pose1, obs(&pose1_true)));
        for (i, p) in truth.iter().enumerate() {
            let a = map.add_point(*p, i as u64, origin, None, 0, 0);
            map.link(0, i, a);
        }
        for (i, p) in truth.iter().enumerate() {
            let b = map.add_point(drift.transform_point(p), i as u64, origin, None, frame, 1);
            map.link(1, i, b);
        }
        // relative transform from revisit camera to first camera, from truth
        let expected = Sim3::from_se3(&pose0).inverse() * Sim3::from_se3(&pose1_true);
        (map, expected)
    }

    fn revisit(shared: usize, frame: usize) -> (MapState, Sim3) {
        revisit_with(shared, frame, PointOrigin::Triangulated)
    }

    #[test]
    fn revisit_is_detected_with_true_relative_pose() {
        let (map, expected) = revisit(200, 60);
        let c = detect_loop(&map, 1, &LoopConfig::default()).unwrap();
        assert_eq!((c.query, c.matched, c.shared, c.inliers), (1, 0, 200, 200));
        // the drifted pose sees the drifted points at 1.03 times their true
        // camera coordinates
        let pts = [Vector3::new(1.0, 2.0, 3.0), Vector3::new(-4.0, 0.0, 9.0)];
        for p in pts {
            let got = c.relative.transform_point(&(p * 1.03));
            let want = expected.transform_point(&p);
            assert!((got - want).norm() < 1e-9);
        }
    }

    #[test]
    fn sensor_depth_pairs_close_without_scale_change() {
        let (map, expected) = revisit_with(200, 60, PointOrigin::DepthCreated);
        let c = detect_loop(&map, 1, &LoopConfig::default()).unwrap();
        assert_eq!(c.relative.scale, 1.0);
        let p = Vector3::new(-2.0, 1.0, 8.0);
        assert!((c.relative.transform_point(&p) - expected.transform_point(&p)).norm() < 1e-9);
    }

    #[test]
    fn too_few_shared_or_too_recent_is_ignored() {
        let (map, _) = revisit(10, 60);
        assert!(detect_loop(&map, 1, &LoopConfig::default()).is_none());
        let (map, _) = revisit(200, 49);
        assert!(detect_loop(&map, 1, &LoopConfig::default()).is_none());
    }

    #[test]
    fn distant_revisit_is_ignored() {
        let (map, _) = revisit(200, 60);
        let cfg = LoopConfig {
            max_distance: 0.4,
            ..LoopConfig::default()
        };
        assert!(detect_loop(&map, 1, &cfg).is_none());
    }

    #[test]
    fn corrupted_pairs_do_not_bias_the_relative_pose() {
        let (mut map, expected) = revisit(200, 60);
        // a quarter of the old points and a quarter of the revisit copies
        // land somewhere unrelated
        for i in (0..200).step_by(4) {
            map.points[i].position += Vector3::new(3.0, -2.0, 7.0);
        }
        for i in (202..400).step_by(4) {
            map.points[i].position *= 1.4;
        }
        let c = detect_loop(&map, 1, &LoopConfig::default()).unwrap();
        assert_eq!(c.inliers, 150);
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!((c.relative.transform_point(&(p * 1.03)) - expected.transform_point(&p)).norm() < 1e-6);
    }

    #[test]
    fn same_point_is_not_loop_evidence() {
        let (mut map, _) = revisit(40, 60);
        for i in 0..40 {
            map.link(1, i, i);
        }
        assert!(detect_loop(&map, 1, &LoopConfig::default()).is_none());
    }
}
