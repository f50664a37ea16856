//! Revisit detection, similarity pose-graph optimisation and map
//! correction.

mod correct;
mod detect;
mod pose_graph;

pub use correct::correct_map;
pub use detect::{detect_loop, LoopCandidate, LoopConfig};
pub use pose_graph::{edge_residual, optimize_pose_graph, PoseGraph, PoseGraphEdge, PoseGraphSolution};

use crate::error::Result;
use crate::geometry::Sim3;
use crate::slam::MapState;

/// Summary of one closure, as written to the run log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopEvent {
    pub query_frame: usize,
    pub match_frame: usize,
    pub shared: usize,
    pub inliers: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Keyframe poses before and after a closure.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopCorrection {
    pub keyframes: Vec<usize>,
    pub old: Vec<Sim3>,
    pub corrected: Vec<Sim3>,
}

impl LoopCorrection {
    /// `corrected * old^-1` for keyframe `kf`, if it was part of the graph.
    pub fn delta(&self, kf: usize) -> Option<Sim3> {
        let i = self.keyframes.binary_search(&kf).ok()?;
        Some(self.corrected[i] * self.old[i].inverse())
    }

    pub fn corrected_of(&self, kf: usize) -> Option<&Sim3> {
        let i = self.keyframes.binary_search(&kf).ok()?;
        Some(&self.corrected[i])
    }
}

/// Builds the pose graph over keyframes `matched..=query` (sequential
/// edges from the current estimates plus the loop edge), optimises it with
/// the match keyframe fixed, and transports the affected map points.
pub fn close_loop(map: &mut MapState, candidate: &LoopCandidate, config: &LoopConfig) -> Result<(LoopEvent, LoopCorrection)> {
    let keyframes: Vec<usize> = (candidate.matched..=candidate.query).collect();
    let old: Vec<Sim3> = keyframes.iter().map(|k| Sim3::from_se3(&map.keyframes[*k].pose)).collect();
    let mut graph = PoseGraph::new(old.clone());
    for i in 0..old.len() - 1 {
        graph.add_edge(i, i + 1, old[i].inverse() * old[i + 1], 1.0);
    }
    graph.add_edge(0, old.len() - 1, candidate.relative, config.loop_weight);
    let sol = optimize_pose_graph(&graph, config.max_iterations)?;
    correct_map(map, &keyframes, &old, &sol.poses);
    let event = LoopEvent {
        query_frame: map.keyframes[candidate.query].frame,
        match_frame: map.keyframes[candidate.matched].frame,
        shared: candidate.shared,
        inliers: candidate.inliers,
        initial_cost: sol.initial_cost,
        final_cost: sol.final_cost,
        iterations: sol.iterations,
        converged: sol.converged,
    };
    Ok((
        event,
        LoopCorrection {
            keyframes,
            old,
            corrected: sol.poses,
        },
    ))
}
