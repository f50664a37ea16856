use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, SMatrix, Vector3, Vector6};

use super::map::MapState;
use super::residual::{bearing_residual, camera_point_pose_jacobian, huber, tangent_basis};
use crate::geometry::PoseSE3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BundleConfig {
    /// Number of most recent keyframes whose poses are optimised.
    pub window: usize,
    pub max_iterations: usize,
    /// Huber threshold, degrees.
    pub huber_deg: f64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            window: 5,
            max_iterations: 10,
            huber_deg: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BundleReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub free_poses: usize,
    pub free_points: usize,
}

struct Term {
    kf: usize,
    point: usize,
    bearing: Vector3<f64>,
    basis: Matrix2x3<f64>,
}

struct Problem {
    /// Keyframe index -> free pose slot.
    pose_slot: BTreeMap<usize, usize>,
    /// Point id -> free point slot.
    point_slot: BTreeMap<usize, usize>,
    terms: Vec<Term>,
    delta: f64,
}

impl Problem {
    fn cost(&self, poses: &BTreeMap<usize, PoseSE3>, points: &BTreeMap<usize, Vector3<f64>>) -> f64 {
        self.terms
            .iter()
            .filter_map(|t| {
                let (r, _, _) = bearing_residual(&poses[&t.kf], &points[&t.point], &t.bearing, &t.basis)?;
                Some(huber(r.norm(), self.delta).0)
            })
            .sum()
    }
}

/// Levenberg-Marquardt over the poses of `window` (keyframe indices) and
/// the points they observe, minimising Huber-weighted angular errors.
///
/// Keyframe 0 and every keyframe outside the window are held fixed; when
/// none of those takes part the oldest window keyframe is fixed instead.
/// Points seen by fewer than two keyframes, and points accepted by depth
/// association during `current_frame`, are held fixed. Steps are only
/// accepted when they lower the total cost.
pub fn local_bundle_adjust(
    map: &mut MapState,
    window: &[usize],
    current_frame: Option<usize>,
    config: &BundleConfig,
) -> BundleReport {
    let window: BTreeSet<usize> = window.iter().copied().collect();
    let mut point_ids = BTreeSet::new();
    for &k in &window {
        point_ids.extend(map.keyframes[k].points.iter().flatten().copied());
    }
    let frozen = |id: usize| {
        let p = &map.points[id];
        p.observations.len() < 2 || (p.depth_modified && current_frame.is_some() && p.last_assoc_frame == current_frame)
    };
    let free_points: Vec<usize> = point_ids.iter().copied().filter(|id| !frozen(*id)).collect();
    let free_set: BTreeSet<usize> = free_points.iter().copied().collect();

    // residual terms: every view of a free point, plus window views of fixed points
    let mut terms = Vec::new();
    let mut involved = BTreeSet::new();
    for &id in &point_ids {
        let p = &map.points[id];
        for &(k, s) in &p.observations {
            if !free_set.contains(&id) && !window.contains(&k) {
                continue;
            }
            let bearing = map.keyframes[k].observations[s].bearing;
            terms.push(Term {
                kf: k,
                point: id,
                bearing,
                basis: tangent_basis(&bearing),
            });
            involved.insert(k);
        }
    }
    let has_fixed = involved.iter().any(|k| *k == 0 || !window.contains(k));
    let oldest = window.iter().next().copied();
    let pose_slot: BTreeMap<usize, usize> = window
        .iter()
        .copied()
        .filter(|k| *k != 0 && (has_fixed || Some(*k) != oldest) && involved.contains(k))
        .enumerate()
        .map(|(i, k)| (k, i))
        .collect();
    let point_slot: BTreeMap<usize, usize> = free_points.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let problem = Problem {
        pose_slot,
        point_slot,
        terms,
        delta: config.huber_deg.to_radians(),
    };

    let mut poses: BTreeMap<usize, PoseSE3> = involved.iter().map(|k| (*k, map.keyframes[*k].pose)).collect();
    let mut points: BTreeMap<usize, Vector3<f64>> = point_ids.iter().map(|id| (*id, map.points[*id].position)).collect();
    let mut cost = problem.cost(&poses, &points);
    let mut report = BundleReport {
        initial_cost: cost,
        final_cost: cost,
        free_poses: problem.pose_slot.len(),
        free_points: problem.point_slot.len(),
        ..Default::default()
    };
    if problem.terms.is_empty() || (problem.pose_slot.is_empty() && problem.point_slot.is_empty()) {
        return report;
    }

    let mut lambda = 1e-4;
    for _ in 0..config.max_iterations {
        report.iterations += 1;
        let Some((dp, dl)) = solve_step(&problem, &poses, &points, lambda) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial_poses = poses.clone();
        for (k, slot) in &problem.pose_slot {
            let d: Vector6<f64> = dp.fixed_rows::<6>(6 * slot).into_owned();
            trial_poses.insert(*k, poses[k].retract(&d));
        }
        let mut trial_points = points.clone();
        for (id, slot) in &problem.point_slot {
            *trial_points.get_mut(id).unwrap() += dl[*slot];
        }
        let trial = problem.cost(&trial_poses, &trial_points);
        if trial < cost {
            let decrease = cost - trial;
            poses = trial_poses;
            points = trial_points;
            cost = trial;
            report.accepted_steps += 1;
            lambda = (lambda * 0.1).max(1e-12);
            if decrease < 1e-12 * (1.0 + cost) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e8 {
                break;
            }
        }
    }
    for k in problem.pose_slot.keys() {
        map.keyframes[*k].pose = poses[k];
    }
    for id in problem.point_slot.keys() {
        map.points[*id].position = points[id];
    }
    report.final_cost = cost;
    report
}

type Block63 = SMatrix<f64, 6, 3>;

/// One damped Gauss-Newton step with the points eliminated by the Schur
/// complement.
fn solve_step(
    problem: &Problem,
    poses: &BTreeMap<usize, PoseSE3>,
    points: &BTreeMap<usize, Vector3<f64>>,
    lambda: f64,
) -> Option<(DVector<f64>, Vec<Vector3<f64>>)> {
    let np = problem.pose_slot.len();
    let nl = problem.point_slot.len();
    let mut hpp = DMatrix::<f64>::zeros(6 * np, 6 * np);
    let mut bp = DVector::<f64>::zeros(6 * np);
    let mut hll = vec![Matrix3::<f64>::zeros(); nl];
    let mut bl = vec![Vector3::<f64>::zeros(); nl];
    let mut hpl: Vec<Vec<(usize, Block63)>> = vec![Vec::new(); nl];

    for t in &problem.terms {
        let pose = &poses[&t.kf];
        let Some((r, jq, q)) = bearing_residual(pose, &points[&t.point], &t.bearing, &t.basis) else {
            continue;
        };
        let w = huber(r.norm(), problem.delta).1;
        let ps = problem.pose_slot.get(&t.kf).copied();
        let ls = problem.point_slot.get(&t.point).copied();
        let jp = ps.map(|_| jq * camera_point_pose_jacobian(&q));
        let jl = ls.map(|_| jq * pose.rotation_matrix().transpose());
        if let (Some(s), Some(jp)) = (ps, &jp) {
            let mut blk = hpp.view_mut((6 * s, 6 * s), (6, 6));
            blk += w * jp.transpose() * jp;
            let mut g = bp.rows_mut(6 * s, 6);
            g += w * jp.transpose() * r;
        }
        if let (Some(s), Some(jl)) = (ls, &jl) {
            hll[s] += w * jl.transpose() * jl;
            bl[s] += w * jl.transpose() * r;
        }
        if let (Some(a), Some(l), Some(jp), Some(jl)) = (ps, ls, &jp, &jl) {
            let blk: Block63 = w * jp.transpose() * jl;
            match hpl[l].iter_mut().find(|(k, _)| *k == a) {
                Some((_, b)) => *b += blk,
                None => hpl[l].push((a, blk)),
            }
        }
    }

    for i in 0..6 * np {
        hpp[(i, i)] += lambda * hpp[(i, i)] + 1e-12;
    }
    let mut hll_inv = Vec::with_capacity(nl);
    for h in &mut hll {
        for i in 0..3 {
            h[(i, i)] += lambda * h[(i, i)] + 1e-12;
        }
        hll_inv.push(h.try_inverse()?);
    }

    // reduced system S dp = -bp + sum Hpl Hll^-1 bl
    let mut s = hpp;
    let mut rhs = -bp;
    for l in 0..nl {
        let inv = &hll_inv[l];
        for (a, ba) in &hpl[l] {
            let tmp: Block63 = ba * inv;
            let mut r = rhs.rows_mut(6 * a, 6);
            r += tmp * bl[l];
            for (b, bb) in &hpl[l] {
                let mut blk = s.view_mut((6 * a, 6 * b), (6, 6));
                blk -= tmp * bb.transpose();
            }
        }
    }
    let dp = if np > 0 { s.cholesky()?.solve(&rhs) } else { DVector::zeros(0) };
    let dl = (0..nl)
        .map(|l| {
            let mut rhs = -bl[l];
            for (a, ba) in &hpl[l] {
                rhs -= ba.transpose() * dp.fixed_rows::<6>(6 * a);
            }
            hll_inv[l] * rhs
        })
        .collect();
    Some((dp, dl))
}
