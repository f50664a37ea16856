use std::fmt::Write as _;
use std::str::FromStr;

use super::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::{umeyama, PoseSE3, Sim3};
use crate::kv::KvWriter;

/// Largest timestamp difference for two poses to be paired, seconds.
pub const MAX_TIME_DIFFERENCE: f64 = 0.05;

/// Sub-trajectory lengths for relative errors, meters.
pub const DEFAULT_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignMode {
    /// Rotation and translation.
    Rigid,
    /// Rotation, translation and scale.
    Similarity,
    /// Compare raw coordinates.
    None,
}

impl AlignMode {
    pub fn name(&self) -> &'static str {
        match self {
            AlignMode::Rigid => "rigid",
            AlignMode::Similarity => "sim3",
            AlignMode::None => "none",
        }
    }
}

impl FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid" | "se3" => Ok(AlignMode::Rigid),
            "sim3" | "similarity" => Ok(AlignMode::Similarity),
            "none" => Ok(AlignMode::None),
            _ => Err(Error::InvalidInput(format!("unknown alignment '{s}' (expected rigid, sim3 or none)"))),
        }
    }
}

/// Index pairs `(est, gt)` matching every estimated pose to the ground-truth
/// pose nearest in time, when within [`MAX_TIME_DIFFERENCE`].
pub fn associate(est: &Trajectory, gt: &Trajectory) -> Vec<(usize, usize)> {
    let gs = gt.stamps();
    let mut out = Vec::new();
    if gs.is_empty() {
        return out;
    }
    for (i, t) in est.stamps().iter().enumerate() {
        let k = gs.partition_point(|g| g < t);
        let mut best = None;
        for j in [k.wrapping_sub(1), k] {
            if let Some(g) = gs.get(j) {
                let d = (g - t).abs();
                if d <= MAX_TIME_DIFFERENCE && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
        }
        if let Some((j, _)) = best {
            out.push((i, j));
        }
    }
    out
}

fn paired(est: &Trajectory, gt: &Trajectory) -> Result<Vec<(usize, usize)>> {
    let pairs = associate(est, gt);
    if pairs.len() < 3 {
        return Err(Error::Evaluation(format!(
            "only {} poses could be paired by timestamp, need at least 3",
            pairs.len()
        )));
    }
    Ok(pairs)
}

/// Transform taking estimated positions onto ground truth.
pub fn align(est: &Trajectory, gt: &Trajectory, mode: AlignMode) -> Result<Sim3> {
    let pairs = paired(est, gt)?;
    if mode == AlignMode::None {
        return Ok(Sim3::identity());
    }
    let src: Vec<_> = pairs.iter().map(|(i, _)| est.poses()[*i].translation).collect();
    let dst: Vec<_> = pairs.iter().map(|(_, j)| gt.poses()[*j].translation).collect();
    umeyama(&src, &dst, mode == AlignMode::Similarity)
        .map(|a| a.transform)
        .ok_or_else(|| Error::Evaluation("trajectory positions are degenerate, cannot align".into()))
}

/// Root-mean-square position error after alignment.
pub fn ate(est: &Trajectory, gt: &Trajectory, mode: AlignMode) -> Result<f64> {
    let pairs = paired(est, gt)?;
    let s = align(est, gt, mode)?;
    let sum: f64 = pairs
        .iter()
        .map(|(i, j)| (s.transform_point(&est.poses()[*i].translation) - gt.poses()[*j].translation).norm_squared())
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Relative errors for one sub-trajectory length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthErrors {
    pub length: f64,
    /// Percent of the length.
    pub rte: f64,
    /// Degrees per meter.
    pub rre: f64,
    pub segments: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeErrors {
    pub rte: f64,
    pub rre: f64,
    pub per_length: Vec<LengthErrors>,
}

/// Relative translation and rotation errors over sub-trajectories of the
/// given ground-truth arc lengths, starting at every paired pose. Lengths
/// no sub-trajectory covers are skipped.
pub fn rte_rre(est: &Trajectory, gt: &Trajectory, lengths: &[f64]) -> Result<RelativeErrors> {
    let pairs = paired(est, gt)?;
    let e: Vec<PoseSE3> = pairs.iter().map(|(i, _)| est.poses()[*i]).collect();
    let g: Vec<PoseSE3> = pairs.iter().map(|(_, j)| gt.poses()[*j]).collect();
    let mut arc = vec![0.0; g.len()];
    for k in 1..g.len() {
        arc[k] = arc[k - 1] + (g[k].translation - g[k - 1].translation).norm();
    }
    let mut per_length = Vec::new();
    for &len in lengths {
        if !(len > 0.0) {
            return Err(Error::Evaluation(format!("sub-trajectory length must be positive, got {len}")));
        }
        let (mut t_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
        let mut j = 0;
        for i in 0..g.len() {
            j = j.max(i);
            while j < g.len() && arc[j] - arc[i] < len {
                j += 1;
            }
            if j == g.len() {
                break;
            }
            let err = (g[i].inverse() * g[j]).inverse() * (e[i].inverse() * e[j]);
            t_sum += err.translation.norm() / len * 100.0;
            r_sum += err.rotation_angle().to_degrees() / len;
            n += 1;
        }
        if n > 0 {
            per_length.push(LengthErrors {
                length: len,
                rte: t_sum / n as f64,
                rre: r_sum / n as f64,
                segments: n,
            });
        }
    }
    if per_length.is_empty() {
        return Err(Error::Evaluation(format!(
            "ground truth ({:.1} m) is shorter than every sub-trajectory length",
            arc.last().copied().unwrap_or(0.0)
        )));
    }
    let k = per_length.len() as f64;
    Ok(RelativeErrors {
        rte: per_length.iter().map(|l| l.rte).sum::<f64>() / k,
        rre: per_length.iter().map(|l| l.rre).sum::<f64>() / k,
        per_length,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub ate: f64,
    pub rte: f64,
    pub rre: f64,
    pub per_length: Vec<LengthErrors>,
    pub align: AlignMode,
    /// Scale of the similarity alignment, reported for every mode.
    pub similarity_scale: f64,
    pub pairs: usize,
}

pub fn evaluate(est: &Trajectory, gt: &Trajectory, mode: AlignMode, lengths: &[f64]) -> Result<MetricsReport> {
    let pairs = paired(est, gt)?.len();
    let rel = rte_rre(est, gt, lengths)?;
    Ok(MetricsReport {
        ate: ate(est, gt, mode)?,
        rte: rel.rte,
        rre: rel.rre,
        per_length: rel.per_length,
        align: mode,
        similarity_scale: align(est, gt, AlignMode::Similarity)?.scale,
        pairs,
    })
}

impl MetricsReport {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "ATE ({} alignment): {:.4} m", self.align.name(), self.ate).unwrap();
        writeln!(s, "RTE: {:.4} %", self.rte).unwrap();
        writeln!(s, "RRE: {:.6} deg/m", self.rre).unwrap();
        writeln!(s, "similarity scale: {:.5}", self.similarity_scale).unwrap();
        writeln!(s, "paired poses: {}", self.pairs).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "{:>10}  {:>10}  {:>12}  {:>8}", "length_m", "rte_pct", "rre_deg_m", "segments").unwrap();
        for l in &self.per_length {
            writeln!(s, "{:>10.1}  {:>10.4}  {:>12.6}  {:>8}", l.length, l.rte, l.rre, l.segments).unwrap();
        }
        s
    }

    /// Key-value form.
    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.put("ate_m", self.ate);
        w.put("rte_pct", self.rte);
        w.put("rre_deg_per_m", self.rre);
        w.put("align", self.align.name());
        w.put("similarity_scale", self.similarity_scale);
        w.put("pairs", self.pairs);
        for l in &self.per_length {
            w.put(&format!("rte_pct.{}", l.length), l.rte);
            w.put(&format!("rre_deg_per_m.{}", l.length), l.rre);
        }
        w.finish()
    }
}
