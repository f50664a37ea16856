use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use panoslam::evaluation::{evaluate, AlignMode, MetricsReport, Trajectory, DEFAULT_LENGTHS};
use panoslam::geometry::{PanoramicCamera, PixelCoord};
use panoslam::run::{run_source, write_run, Densification, RunConfig};
use panoslam::sensor_sim::{generate_dataset, Dataset, DatasetConfig, Scenario};
use panoslam::Error;

create_exception!(panoslam, TrackingLost, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::TrackingLost { .. } => TrackingLost::new_err(e.to_string()),
        Error::Io { .. } | Error::Parse { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ate", r.ate)?;
    d.set_item("rte", r.rte)?;
    d.set_item("rre", r.rre)?;
    d.set_item("align", r.align.name())?;
    d.set_item("similarity_scale", r.similarity_scale)?;
    d.set_item("pairs", r.pairs)?;
    Ok(d)
}

/// Simulates a scenario and writes it to `out`. Returns frame count and
/// path length.
#[pyfunction]
#[pyo3(signature = (out, scenario = "loop_1km", seed = 1))]
fn generate(out: PathBuf, scenario: &str, seed: u64) -> PyResult<(usize, f64)> {
    let scenario: Scenario = scenario.parse().map_err(to_py)?;
    let seq = generate_dataset(&DatasetConfig::new(scenario, seed), &out).map_err(to_py)?;
    Ok((seq.frames.len(), seq.trajectory_length))
}

/// Runs the pipeline on a dataset and evaluates it against its ground
/// truth. With `out` the run files are written there as well.
#[pyfunction]
#[pyo3(signature = (dataset, densify = "panodars", theta = 2.0, association = true, loop_closing = true, out = None))]
fn run<'py>(
    py: Python<'py>,
    dataset: PathBuf,
    densify: &str,
    theta: f64,
    association: bool,
    loop_closing: bool,
    out: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let densification: Densification = densify.parse().map_err(to_py)?;
    let cfg = RunConfig {
        dataset,
        densification,
        theta,
        association,
        loop_closing,
        ..RunConfig::default()
    };
    let data = Dataset::open(&cfg.dataset).map_err(to_py)?;
    let output = py.detach(|| run_source(&data, &cfg)).map_err(to_py)?;
    if let Some(dir) = out {
        write_run(&dir, &cfg, &output).map_err(to_py)?;
    }
    let report = evaluate(&output.trajectory, &data.groundtruth, AlignMode::Rigid, &DEFAULT_LENGTHS).map_err(to_py)?;
    let d = report_dict(py, &report)?;
    d.set_item("keyframes", output.keyframes)?;
    d.set_item("points", output.points)?;
    d.set_item("loops", output.loops.len())?;
    let positions: Vec<(f64, f64, f64, f64)> = output
        .trajectory
        .iter()
        .map(|(t, p)| (t, p.translation.x, p.translation.y, p.translation.z))
        .collect();
    d.set_item("positions", positions)?;
    Ok(d)
}

/// ATE, RTE and RRE of an estimated trajectory file against ground truth.
#[pyfunction]
#[pyo3(signature = (estimate, groundtruth, align = "rigid"))]
fn evaluate_files<'py>(py: Python<'py>, estimate: PathBuf, groundtruth: PathBuf, align: &str) -> PyResult<Bound<'py, PyDict>> {
    let mode: AlignMode = align.parse().map_err(to_py)?;
    let est = Trajectory::read(&estimate).map_err(to_py)?;
    let gt = Trajectory::read(&groundtruth).map_err(to_py)?;
    let report = evaluate(&est, &gt, mode, &DEFAULT_LENGTHS).map_err(to_py)?;
    report_dict(py, &report)
}

/// Equirectangular projection of a camera-frame point to `(u, v)` pixels.
#[pyfunction]
fn project(width: usize, height: usize, point: (f64, f64, f64)) -> PyResult<(f64, f64)> {
    let cam = PanoramicCamera::new(width, height).map_err(to_py)?;
    let px = cam.project(&[point.0, point.1, point.2].into()).map_err(to_py)?;
    Ok((px.u, px.v))
}

/// Unit bearing of pixel `(u, v)`.
#[pyfunction]
fn bearing(width: usize, height: usize, pixel: (f64, f64)) -> PyResult<(f64, f64, f64)> {
    let cam = PanoramicCamera::new(width, height).map_err(to_py)?;
    let b = cam.bearing(&PixelCoord::new(pixel.0, pixel.1));
    Ok((b.x, b.y, b.z))
}

#[pymodule]
#[pyo3(name = "panoslam")]
fn panoslam_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrackingLost", m.py().get_type::<TrackingLost>())?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_files, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(bearing, m)?)?;
    Ok(())
}
