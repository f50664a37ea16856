use std::collections::HashMap;

use nalgebra::{Matrix6, Vector3, Vector6};

use super::frame::{Frame, TrackedMatches};
use super::map::MapState;
use super::residual::{angular_error, bearing_residual, camera_point_pose_jacobian, huber, tangent_basis};
use crate::error::{Error, Result};
use crate::geometry::PoseSE3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingConfig {
    /// Fewer surviving matches than this loses tracking.
    pub min_matches: usize,
    /// Huber threshold, degrees.
    pub huber_deg: f64,
    /// Matches with a larger final angular error are dropped, degrees.
    pub outlier_deg: f64,
    /// Gauss-Newton iterations per round.
    pub iterations: usize,
    /// Disables Huber weighting and outlier rejection when false.
    pub robust: bool,
    /// Points seen within this many frames form the local map.
    pub local_window: usize,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            min_matches: 6,
            huber_deg: 0.5,
            outlier_deg: 3.0,
            iterations: 10,
            robust: true,
            local_window: 20,
        }
    }
}

/// Descriptor matching against recently seen points. When several points
/// share a descriptor the most recently seen (then newest) wins.
pub fn match_descriptors(frame: &Frame, map: &MapState, local_window: usize) -> TrackedMatches {
    let horizon = frame.index.saturating_sub(local_window);
    let mut by_desc: HashMap<u64, usize> = HashMap::new();
    for p in &map.points {
        if p.last_seen < horizon {
            continue;
        }
        by_desc
            .entry(p.descriptor)
            .and_modify(|cur| {
                let c = &map.points[*cur];
                if (p.last_seen, p.id) > (c.last_seen, c.id) {
                    *cur = p.id;
                }
            })
            .or_insert(p.id);
    }
    let mut m = TrackedMatches::new(frame.observations.len());
    for (i, o) in frame.observations.iter().enumerate() {
        m.set(i, by_desc.get(&o.descriptor_id).copied());
    }
    m
}

/// Motion-only Gauss-Newton on angular bearing residuals. With `robust`
/// the residuals are Huber-weighted.
pub fn estimate_pose(
    bearings: &[Vector3<f64>],
    points: &[Vector3<f64>],
    initial: &PoseSE3,
    config: &TrackingConfig,
) -> PoseSE3 {
    let delta = config.huber_deg.to_radians();
    let bases: Vec<_> = bearings.iter().map(tangent_basis).collect();
    let mut pose = *initial;
    for _ in 0..config.iterations {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for ((b, e), p) in bearings.iter().zip(&bases).zip(points) {
            let Some((r, jq, q)) = bearing_residual(&pose, p, b, e) else {
                continue;
            };
            let w = if config.robust { huber(r.norm(), delta).1 } else { 1.0 };
            let j = jq * camera_point_pose_jacobian(&q);
            h += w * j.transpose() * j;
            g += w * j.transpose() * r;
        }
        let Some(step) = h.cholesky().map(|c| c.solve(&-g)) else {
            break;
        };
        pose = pose.retract(&step);
        if step.norm() < 1e-12 {
            break;
        }
    }
    pose
}

/// Matches the frame against the map and estimates its pose from
/// `initial`. Matches whose final angular error exceeds the outlier
/// threshold are cleared; if one point fills several slots only the best
/// fitting slot keeps it.
pub fn track(
    frame: &Frame,
    map: &MapState,
    initial: &PoseSE3,
    config: &TrackingConfig,
) -> Result<(TrackedMatches, PoseSE3)> {
    let mut matches = match_descriptors(frame, map, config.local_window);
    let lost = |m: &TrackedMatches| Error::TrackingLost {
        frame: frame.index,
        matches: m.matched_count(),
        required: config.min_matches,
    };
    if matches.matched_count() < config.min_matches {
        return Err(lost(&matches));
    }
    let rounds = if config.robust { 2 } else { 1 };
    let mut pose = *initial;
    for _ in 0..rounds {
        let (b, p): (Vec<_>, Vec<_>) = matches
            .matched()
            .map(|(i, id)| (frame.bearings[i], map.points[id].position))
            .unzip();
        pose = estimate_pose(&b, &p, &pose, config);
        if config.robust {
            let limit = config.outlier_deg.to_radians();
            for i in 0..matches.len() {
                if let Some(id) = matches.get(i) {
                    if !(angular_error(&pose, &map.points[id].position, &frame.bearings[i]) <= limit) {
                        matches.set(i, None);
                    }
                }
            }
        }
        if matches.matched_count() < config.min_matches {
            return Err(lost(&matches));
        }
    }
    // one slot per point: keep the smallest error
    let mut best: HashMap<usize, (usize, f64)> = HashMap::new();
    for (i, id) in matches.matched() {
        let e = angular_error(&pose, &map.points[id].position, &frame.bearings[i]);
        best.entry(id)
            .and_modify(|cur| {
                if e < cur.1 {
                    *cur = (i, e);
                }
            })
            .or_insert((i, e));
    }
    for i in 0..matches.len() {
        if let Some(id) = matches.get(i) {
            if best[&id].0 != i {
                matches.set(i, None);
            }
        }
    }
    if matches.matched_count() < config.min_matches {
        return Err(lost(&matches));
    }
    Ok((matches, pose))
}
