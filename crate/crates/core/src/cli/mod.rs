//! Command-line front end: dataset generation, runs, evaluation and the
//! association ablation grid.

mod ablate;

pub use ablate::{ablate, AblationResult, AblationRow, CellMetrics, DEFAULT_THETAS};

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, AlignMode, Trajectory, DEFAULT_LENGTHS};
use crate::run::{run_source, write_run, Densification, RunConfig};
use crate::sensor_sim::{generate_dataset, Dataset, DatasetConfig, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRACKING_LOST: i32 = 3;
pub const EXIT_IO: i32 = 4;
const EXIT_OTHER: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "panoslam", version, about = "Panoramic camera and LiDAR SLAM on synthetic drives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a drive and write it as a dataset.
    Generate {
        #[arg(long, default_value = "loop_1km")]
        scenario: Scenario,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline on a dataset.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Association ablation: both densification methods, each without
    /// association and with every threshold.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated association thresholds, meters.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THETAS)]
        thetas: Vec<f64>,
        /// Concurrent grid cells; defaults to the available cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an estimated trajectory with ground truth.
    Eval {
        estimate: PathBuf,
        groundtruth: PathBuf,
        #[arg(long, default_value = "rigid")]
        align: AlignMode,
        /// Also write the metrics as key-value text.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Run configuration: a config file, overridden by flags.
#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub densify: Option<Densification>,
    #[arg(long)]
    pub no_assoc: bool,
    #[arg(long)]
    pub no_loop: bool,
    /// Seed of the depth-refinement search.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Alignment used for the reported ATE.
    #[arg(long, default_value = "rigid")]
    pub align: AlignMode,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if cfg.dataset.as_os_str().is_empty() {
            return Err(Error::Config("no dataset given (use --dataset or a config file)".into()));
        }
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if let Some(d) = self.densify {
            cfg.densification = d;
        }
        if self.no_assoc {
            cfg.association = false;
        }
        if self.no_loop {
            cfg.loop_closing = false;
        }
        if let Some(s) = self.seed {
            cfg.pso.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::TrackingLost { .. } => EXIT_TRACKING_LOST,
        Error::Io { .. } | Error::Parse { .. } | Error::InvalidInput(_) | Error::Evaluation(_) => EXIT_IO,
        Error::CorrectionUnavailable(_) => EXIT_OTHER,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { scenario, seed, out } => {
            let seq = generate_dataset(&DatasetConfig::new(scenario, seed), &out)?;
            println!(
                "wrote {} frames of {} (seed {seed}, {:.1} m) to {}",
                seq.frames.len(),
                scenario,
                seq.trajectory_length,
                out.display()
            );
        }
        Command::Run { run, out } => {
            let cfg = run.resolve()?;
            let dataset = Dataset::open(&cfg.dataset)?;
            let output = run_source(&dataset, &cfg)?;
            write_run(&out, &cfg, &output)?;
            let report = evaluate(&output.trajectory, &dataset.groundtruth, run.align, &DEFAULT_LENGTHS)?;
            write_text(&out.join("metrics.txt"), &report.to_kv())?;
            println!(
                "{} frames, {} keyframes, {} points, {} associations, {} loop closures",
                output.online.len(),
                output.keyframes,
                output.points,
                output.associations,
                output.loops.len()
            );
            print!("{}", report.to_table());
        }
        Command::Ablate {
            run,
            thetas,
            jobs,
            out,
        } => {
            let cfg = run.resolve()?;
            if thetas.iter().any(|t| !(*t > 0.0)) {
                return Err(Error::Config("thresholds must be positive".into()));
            }
            let dataset = Dataset::open(&cfg.dataset)?;
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let result = ablate(&dataset, &cfg, &thetas, run.align, jobs);
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_text(&out.join("ablation.txt"), &result.to_table())?;
            write_text(&out.join("config.txt"), &cfg.to_kv())?;
            print!("{}", result.to_table());
        }
        Command::Eval {
            estimate,
            groundtruth,
            align,
            out,
        } => {
            let est = Trajectory::read(&estimate)?;
            let gt = Trajectory::read(&groundtruth)?;
            let report = evaluate(&est, &gt, align, &DEFAULT_LENGTHS)?;
            if let Some(p) = out {
                write_text(&p, &report.to_kv())?;
            }
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

/// Parses arguments, executes, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
