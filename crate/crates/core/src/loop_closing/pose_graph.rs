use std::collections::BTreeMap;

use nalgebra::{DMatrix, SMatrix};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::geometry::{Sim3, Sim3Tangent};

type Vector7 = SMatrix<f64, 7, 1>;
type Matrix7 = SMatrix<f64, 7, 7>;

/// Relative constraint `measurement ~ X_i^-1 X_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseGraphEdge {
    pub i: usize,
    pub j: usize,
    pub measurement: Sim3,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph {
    pub nodes: Vec<Sim3>,
    pub fixed: Vec<bool>,
    pub edges: Vec<PoseGraphEdge>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraphSolution {
    pub poses: Vec<Sim3>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out before convergence.
    pub converged: bool,
}

impl PoseGraph {
    /// A graph over `nodes` with the first node fixed and no edges.
    pub fn new(nodes: Vec<Sim3>) -> Self {
        let mut fixed = vec![false; nodes.len()];
        if let Some(f) = fixed.first_mut() {
            *f = true;
        }
        Self {
            nodes,
            fixed,
            edges: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize, measurement: Sim3, weight: f64) {
        self.edges.push(PoseGraphEdge {
            i,
            j,
            measurement,
            weight,
        });
    }

    /// Checks indices, weights, connectivity and that a node is fixed.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 || self.fixed.len() != n {
            return Err(Error::InvalidInput("pose graph needs nodes and one fixed flag per node".into()));
        }
        if !self.fixed.iter().any(|f| *f) {
            return Err(Error::InvalidInput("pose graph has no fixed node".into()));
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in &self.edges {
            if e.i >= n || e.j >= n || e.i == e.j {
                return Err(Error::InvalidInput(format!("bad pose graph edge {} -> {}", e.i, e.j)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::InvalidInput("edge weights must be positive".into()));
            }
            let (a, b) = (root(&mut parent, e.i), root(&mut parent, e.j));
            parent[a] = b;
        }
        let r0 = root(&mut parent, 0);
        if (1..n).any(|i| root(&mut parent, i) != r0) {
            return Err(Error::InvalidInput("pose graph is not connected".into()));
        }
        Ok(())
    }

    pub fn cost(&self, poses: &[Sim3]) -> f64 {
        self.edges
            .iter()
            .map(|e| e.weight * edge_residual(e, &poses[e.i], &poses[e.j]).norm_squared())
            .sum()
    }
}

/// `log(E^-1 X_i^-1 X_j)`.
pub fn edge_residual(edge: &PoseGraphEdge, xi: &Sim3, xj: &Sim3) -> Sim3Tangent {
    (edge.measurement.inverse() * xi.inverse() * *xj).log()
}

fn numeric_jacobians(edge: &PoseGraphEdge, xi: &Sim3, xj: &Sim3) -> (Matrix7, Matrix7) {
    let h = 1e-6;
    let mut ji = Matrix7::zeros();
    let mut jj = Matrix7::zeros();
    for k in 0..7 {
        let mut d = Vector7::zeros();
        d[k] = h;
        let col_i = (edge_residual(edge, &xi.retract(&d), xj) - edge_residual(edge, &xi.retract(&-d), xj)) / (2.0 * h);
        let col_j = (edge_residual(edge, xi, &xj.retract(&d)) - edge_residual(edge, xi, &xj.retract(&-d))) / (2.0 * h);
        ji.set_column(k, &col_i);
        jj.set_column(k, &col_j);
    }
    (ji, jj)
}

/// Levenberg-Marquardt over the free nodes on the similarity manifold.
/// Fixed nodes are returned untouched; a step is kept only if it lowers
/// the cost, so the result never costs more than the input.
pub fn optimize_pose_graph(graph: &PoseGraph, max_iterations: usize) -> Result<PoseGraphSolution> {
    graph.validate()?;
    let n = graph.nodes.len();
    let mut slot = vec![None; n];
    let mut free = 0;
    for i in 0..n {
        if !graph.fixed[i] {
            slot[i] = Some(free);
            free += 1;
        }
    }
    let mut poses = graph.nodes.clone();
    let mut cost = graph.cost(&poses);
    let initial_cost = cost;
    let mut converged = free == 0 || cost == 0.0;
    let mut iterations = 0;
    let mut lambda = 1e-4;
    while !converged && iterations < max_iterations {
        iterations += 1;
        let mut blocks: BTreeMap<(usize, usize), Matrix7> = BTreeMap::new();
        let mut g = nalgebra::DVector::<f64>::zeros(7 * free);
        for e in &graph.edges {
            let r = edge_residual(e, &poses[e.i], &poses[e.j]);
            let (ji, jj) = numeric_jacobians(e, &poses[e.i], &poses[e.j]);
            let parts = [(slot[e.i], ji), (slot[e.j], jj)];
            for (sa, ja) in &parts {
                let Some(a) = sa else { continue };
                let mut ga = g.rows_mut(7 * a, 7);
                ga += e.weight * ja.transpose() * r;
                for (sb, jb) in &parts {
                    let Some(b) = sb else { continue };
                    *blocks.entry((*a, *b)).or_insert_with(Matrix7::zeros) += e.weight * ja.transpose() * jb;
                }
            }
        }
        let mut coo = CooMatrix::new(7 * free, 7 * free);
        for ((a, b), m) in &blocks {
            for r in 0..7 {
                for c in 0..7 {
                    let mut v = m[(r, c)];
                    if a == b && r == c {
                        v += lambda * v + 1e-12;
                    }
                    if v != 0.0 {
                        coo.push(7 * a + r, 7 * b + c, v);
                    }
                }
            }
        }
        for a in 0..free {
            if !blocks.contains_key(&(a, a)) {
                for r in 0..7 {
                    coo.push(7 * a + r, 7 * a + r, 1e-12);
                }
            }
        }
        let h = CscMatrix::from(&coo);
        let step = match CscCholesky::factor(&h) {
            Ok(chol) => chol.solve(&DMatrix::from_column_slice(7 * free, 1, (-&g).as_slice())),
            Err(_) => {
                lambda *= 10.0;
                continue;
            }
        };
        let mut trial = poses.clone();
        for i in 0..n {
            if let Some(s) = slot[i] {
                let d = Vector7::from_iterator(step.view((7 * s, 0), (7, 1)).iter().copied());
                trial[i] = poses[i].retract(&d);
            }
        }
        let trial_cost = graph.cost(&trial);
        if trial_cost < cost {
            let decrease = cost - trial_cost;
            poses = trial;
            cost = trial_cost;
            lambda = (lambda * 0.1).max(1e-12);
            if decrease <= 1e-12 * (1.0 + cost) || step.norm() < 1e-12 {
                converged = true;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e10 || step.norm() < 1e-12 {
                // no descent direction left: this is a minimum
                converged = true;
            }
        }
    }
    Ok(PoseGraphSolution {
        poses,
        initial_cost,
        final_cost: cost,
        iterations,
        converged,
    })
}
