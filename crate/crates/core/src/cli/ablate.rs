use std::fmt::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::evaluation::{evaluate, AlignMode, DEFAULT_LENGTHS};
use crate::run::{densify_sequence, run_with_depth, DensifiedFrame, Densification, FrameSource, RunConfig};

pub const DEFAULT_THETAS: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellMetrics {
    pub ate: f64,
    pub rte: f64,
    pub rre: f64,
}

/// One grid cell; `theta` is `None` for the no-association baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub densification: Densification,
    pub theta: Option<f64>,
    pub outcome: Result<CellMetrics, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub align: AlignMode,
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    pub fn row(&self, densification: Densification, theta: Option<f64>) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.densification == densification && r.theta == theta)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# ATE with {} alignment", self.align.name()).unwrap();
        writeln!(s, "{:<9} {:>5} {:>10} {:>9} {:>11}", "densify", "theta", "ate_m", "rte_pct", "rre_deg_m").unwrap();
        for r in &self.rows {
            let theta = r.theta.map_or("-".to_string(), |t| format!("{t}"));
            match &r.outcome {
                Ok(m) => writeln!(
                    s,
                    "{:<9} {:>5} {:>10.4} {:>9.4} {:>11.6}",
                    r.densification.name(),
                    theta,
                    m.ate,
                    m.rte,
                    m.rre
                ),
                Err(e) => writeln!(s, "{:<9} {:>5} failed: {e}", r.densification.name(), theta),
            }
            .unwrap();
        }
        s
    }
}

/// Runs, for each densification method, the no-association baseline and
/// one association run per threshold. Each method's depth is computed once
/// and shared by its cells. Cells run on up to `jobs` threads; a failing
/// cell is recorded and the grid continues.
pub fn ablate<S: FrameSource + Sync + ?Sized>(
    source: &S,
    base: &RunConfig,
    thetas: &[f64],
    align: AlignMode,
    jobs: usize,
) -> AblationResult {
    let mut rows = Vec::new();
    for method in Densification::ALL {
        let config = RunConfig {
            densification: method,
            ..base.clone()
        };
        let cells: Vec<Option<f64>> = std::iter::once(None).chain(thetas.iter().map(|t| Some(*t))).collect();
        match densify_sequence(source, &config) {
            Ok(depth) => rows.extend(run_cells(source, &config, &depth, &cells, align, jobs)),
            Err(e) => rows.extend(cells.iter().map(|theta| AblationRow {
                densification: method,
                theta: *theta,
                outcome: Err(format!("densification: {e}")),
            })),
        }
    }
    AblationResult { align, rows }
}

fn run_cells<S: FrameSource + Sync + ?Sized>(
    source: &S,
    config: &RunConfig,
    depth: &[DensifiedFrame],
    cells: &[Option<f64>],
    align: AlignMode,
    jobs: usize,
) -> Vec<AblationRow> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<AblationRow>>> = Mutex::new(vec![None; cells.len()]);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(theta) = cells.get(i) else { break };
        let cell = RunConfig {
            association: theta.is_some(),
            theta: theta.unwrap_or(config.theta),
            ..config.clone()
        };
        let outcome = run_with_depth(source, &cell, depth)
            .and_then(|out| evaluate(&out.trajectory, source.groundtruth(), align, &DEFAULT_LENGTHS))
            .map(|m| CellMetrics {
                ate: m.ate,
                rte: m.rte,
                rre: m.rre,
            })
            .map_err(|e| e.to_string());
        results.lock().unwrap()[i] = Some(AblationRow {
            densification: config.densification,
            theta: *theta,
            outcome,
        });
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, cells.len().max(1)) {
            s.spawn(work);
        }
    });
    results.into_inner().unwrap().into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: Densification, theta: Option<f64>, outcome: Result<CellMetrics, String>) -> AblationRow {
        AblationRow {
            densification: d,
            theta,
            outcome,
        }
    }

    #[test]
    fn table_lists_rows_in_order_and_marks_failures() {
        let m = CellMetrics {
            ate: 1.5,
            rte: 0.25,
            rre: 0.001,
        };
        let result = AblationResult {
            align: AlignMode::Rigid,
            rows: vec![
                row(Densification::InterpolationOnly, None, Ok(m)),
                row(Densification::InterpolationOnly, Some(2.0), Err("tracking lost".into())),
            ],
        };
        let table = result.to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("interp") && lines[2].contains(" - ") && lines[2].contains("1.5000"));
        assert!(lines[3].contains("failed: tracking lost"));
        assert_eq!(result.failures(), 1);
        assert!(result.row(Densification::InterpolationOnly, Some(2.0)).is_some());
        assert!(result.row(Densification::PanoDars, None).is_none());
    }
}
