//! End-to-end runs: densify every frame, then track and map the sequence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::depth_refine::{interpolate_sparse, refine, AuxiliaryParams, DenseDepthMap, PsoConfig, RefineStatus, ToyPredictor};
use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::PanoramicCamera;
use crate::kv::{parse_switch, switch, KvFile, KvWriter};
use crate::loop_closing::LoopConfig;
use crate::sensor_sim::{overlap_region, Dataset, FrameData, PixelMask, SimulatedSequence};
use crate::slam::{Frame, LoopRecord, Slam, SlamConfig};

/// How the sparse LiDAR depth is turned into dense depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Densification {
    /// Piecewise-linear interpolation of the LiDAR depth alone.
    InterpolationOnly,
    /// Learned prediction corrected by LiDAR residuals and tuned by PSO.
    PanoDars,
}

impl Densification {
    pub const ALL: [Densification; 2] = [Densification::InterpolationOnly, Densification::PanoDars];

    pub fn name(&self) -> &'static str {
        match self {
            Densification::InterpolationOnly => "interp",
            Densification::PanoDars => "panodars",
        }
    }
}

impl std::fmt::Display for Densification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Densification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interp" | "interpolation_only" => Ok(Densification::InterpolationOnly),
            "panodars" | "pano_dars" => Ok(Densification::PanoDars),
            _ => Err(Error::Config(format!("unknown densification '{s}' (expected interp or panodars)"))),
        }
    }
}

/// Everything that determines a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub densification: Densification,
    /// Association distance threshold, meters.
    pub theta: f64,
    pub association: bool,
    pub loop_closing: bool,
    pub pso: PsoConfig,
    pub predictor_seed: u64,
    pub split_seed: u64,
    /// Dilation radius of the overlap region, pixels.
    pub overlap_radius: usize,
    /// Start each frame's search from the previous frame's parameters.
    pub warm_start: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            densification: Densification::PanoDars,
            theta: 2.0,
            association: true,
            loop_closing: true,
            pso: PsoConfig::default(),
            predictor_seed: 7,
            split_seed: 11,
            overlap_radius: 8,
            warm_start: false,
        }
    }
}

const CONFIG_KEYS: [&str; 17] = [
    "dataset",
    "densify",
    "theta",
    "association",
    "loop_closing",
    "pso.swarm_size",
    "pso.iterations",
    "pso.inertia",
    "pso.cognitive",
    "pso.social",
    "pso.seed",
    "pso.halfwidth",
    "pso.seed_origin",
    "predictor_seed",
    "split_seed",
    "overlap_radius",
    "warm_start",
];

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.association && !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Config(format!("theta must be positive when association is on, got {}", self.theta)));
        }
        self.pso.validate()
    }

    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.comment("run configuration");
        w.put("dataset", self.dataset.display());
        w.put("densify", self.densification);
        w.put("theta", self.theta);
        w.put("association", switch(self.association));
        w.put("loop_closing", switch(self.loop_closing));
        w.put("pso.swarm_size", self.pso.swarm_size);
        w.put("pso.iterations", self.pso.iterations);
        w.put("pso.inertia", self.pso.inertia);
        w.put("pso.cognitive", self.pso.cognitive);
        w.put("pso.social", self.pso.social);
        w.put("pso.seed", self.pso.seed);
        w.put("pso.halfwidth", self.pso.search_halfwidth);
        w.put("pso.seed_origin", switch(self.pso.seed_origin));
        w.put("predictor_seed", self.predictor_seed);
        w.put("split_seed", self.split_seed);
        w.put("overlap_radius", self.overlap_radius);
        w.put("warm_start", switch(self.warm_start));
        w.finish()
    }

    /// Parses a key-value config. Missing keys take their defaults;
    /// unknown keys are rejected.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        for k in kv.keys() {
            if !CONFIG_KEYS.contains(&k) {
                return Err(Error::Config(format!("{}: unknown key '{k}'", kv.path().display())));
            }
        }
        let sw = |key: &str, default: bool| -> Result<bool> {
            match kv.get_str(key) {
                None => Ok(default),
                Some(v) => parse_switch(v).map_err(|e| Error::Config(format!("{}: {key}: {e}", kv.path().display()))),
            }
        };
        let d = RunConfig::default();
        let cfg = RunConfig {
            dataset: kv.get_str("dataset").map(PathBuf::from).unwrap_or(d.dataset),
            densification: kv.get("densify")?.unwrap_or(d.densification),
            theta: kv.get("theta")?.unwrap_or(d.theta),
            association: sw("association", d.association)?,
            loop_closing: sw("loop_closing", d.loop_closing)?,
            pso: PsoConfig {
                swarm_size: kv.get("pso.swarm_size")?.unwrap_or(d.pso.swarm_size),
                iterations: kv.get("pso.iterations")?.unwrap_or(d.pso.iterations),
                inertia: kv.get("pso.inertia")?.unwrap_or(d.pso.inertia),
                cognitive: kv.get("pso.cognitive")?.unwrap_or(d.pso.cognitive),
                social: kv.get("pso.social")?.unwrap_or(d.pso.social),
                seed: kv.get("pso.seed")?.unwrap_or(d.pso.seed),
                search_halfwidth: kv.get("pso.halfwidth")?.unwrap_or(d.pso.search_halfwidth),
                seed_origin: sw("pso.seed_origin", d.pso.seed_origin)?,
            },
            predictor_seed: kv.get("predictor_seed")?.unwrap_or(d.predictor_seed),
            split_seed: kv.get("split_seed")?.unwrap_or(d.split_seed),
            overlap_radius: kv.get("overlap_radius")?.unwrap_or(d.overlap_radius),
            warm_start: sw("warm_start", d.warm_start)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn slam_config(&self) -> SlamConfig {
        SlamConfig {
            association: self.association.then_some(self.theta),
            loop_closing: self.loop_closing.then(LoopConfig::default),
            ..SlamConfig::default()
        }
    }
}

/// A source of frames: an on-disk dataset or an in-memory simulation.
pub trait FrameSource {
    fn camera(&self) -> PanoramicCamera;
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<FrameData>;
    fn groundtruth(&self) -> &Trajectory;
}

impl FrameSource for Dataset {
    fn camera(&self) -> PanoramicCamera {
        Dataset::camera(self)
    }

    fn frame_count(&self) -> usize {
        self.len()
    }

    fn frame(&self, index: usize) -> Result<FrameData> {
        Dataset::frame(self, index)
    }

    fn groundtruth(&self) -> &Trajectory {
        &self.groundtruth
    }
}

impl FrameSource for SimulatedSequence {
    fn camera(&self) -> PanoramicCamera {
        self.config.camera().expect("simulated camera size is valid")
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<FrameData> {
        self.frames
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("no frame {index}")))
    }

    fn groundtruth(&self) -> &Trajectory {
        &self.groundtruth
    }
}

/// Outcome of densifying one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensifyStatus {
    Interpolated,
    Refined,
    /// Too few LiDAR pixels for the parameter search.
    Skipped,
    /// Prediction used without LiDAR correction.
    Uncorrected,
    /// No usable depth at all.
    Empty,
}

/// Dense depth of one frame, stored only on its overlap region.
#[derive(Clone, Debug, PartialEq)]
pub struct DensifiedFrame {
    pub overlap: PixelMask,
    /// Depth per overlap pixel in row-major order; NaN where undefined.
    pub values: Vec<f64>,
    pub status: DensifyStatus,
}

impl DensifiedFrame {
    fn from_map(overlap: PixelMask, depth: &DenseDepthMap, status: DensifyStatus) -> Self {
        let values = overlap.iter_set().map(|(c, r)| depth.get(c, r).unwrap_or(f64::NAN)).collect();
        Self { overlap, values, status }
    }

    pub fn depth(&self) -> DenseDepthMap {
        let mut d = DenseDepthMap::new(self.overlap.width, self.overlap.height);
        for ((c, r), v) in self.overlap.iter_set().zip(&self.values) {
            d.set(c, r, *v);
        }
        d
    }
}

fn mix_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Densifies every frame of the source.
pub fn densify_sequence<S: FrameSource + ?Sized>(source: &S, config: &RunConfig) -> Result<Vec<DensifiedFrame>> {
    config.validate()?;
    let camera = source.camera();
    let predictor = ToyPredictor::new(&camera, config.predictor_seed);
    let identity = AuxiliaryParams::identity(crate::depth_refine::TOY_CHANNELS);
    let mut x0 = identity.clone();
    let mut out = Vec::with_capacity(source.frame_count());
    for i in 0..source.frame_count() {
        let f = source.frame(i)?;
        let overlap = overlap_region(&f.sparse, config.overlap_radius);
        let frame = match config.densification {
            Densification::InterpolationOnly => match interpolate_sparse(&f.sparse, &overlap) {
                Ok(d) => DensifiedFrame::from_map(overlap, &d, DensifyStatus::Interpolated),
                Err(Error::CorrectionUnavailable(_)) => DensifiedFrame {
                    values: vec![f64::NAN; overlap.count()],
                    overlap,
                    status: DensifyStatus::Empty,
                },
                Err(e) => return Err(e),
            },
            Densification::PanoDars => {
                let pso = PsoConfig {
                    seed: mix_seed(config.pso.seed, i),
                    ..config.pso.clone()
                };
                let r = refine(&predictor, &f.context, &f.sparse, &overlap, &x0, &pso, mix_seed(config.split_seed, i))?;
                if config.warm_start {
                    x0 = r.params.clone();
                }
                let status = match r.status {
                    RefineStatus::Refined => DensifyStatus::Refined,
                    RefineStatus::Skipped => DensifyStatus::Skipped,
                    RefineStatus::Uncorrected => DensifyStatus::Uncorrected,
                };
                DensifiedFrame::from_map(overlap, &r.depth, status)
            }
        };
        out.push(frame);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Final estimate after all corrections.
    pub trajectory: Trajectory,
    /// Estimates as produced frame by frame.
    pub online: Trajectory,
    pub map_snapshot: String,
    pub log: String,
    pub loops: Vec<LoopRecord>,
    pub keyframes: usize,
    pub points: usize,
    pub associations: usize,
}

/// Runs tracking and mapping over pre-densified frames.
pub fn run_with_depth<S: FrameSource + ?Sized>(
    source: &S,
    config: &RunConfig,
    densified: &[DensifiedFrame],
) -> Result<RunOutput> {
    config.validate()?;
    if densified.len() != source.frame_count() {
        return Err(Error::InvalidInput(format!(
            "{} densified frames for {} input frames",
            densified.len(),
            source.frame_count()
        )));
    }
    let camera = source.camera();
    let mut slam = Slam::new(camera, config.slam_config())?;
    let mut log = String::new();
    writeln!(log, "# frame tracked keyframe associated depth_created triangulated").unwrap();
    let mut associations = 0;
    for (i, dense) in densified.iter().enumerate() {
        let f = source.frame(i)?;
        let mut frame = Frame::new(
            f.index,
            f.timestamp,
            f.observations,
            f.sparse,
            dense.depth(),
            dense.overlap.clone(),
            &camera,
        )?;
        let report = slam.process(&mut frame)?;
        associations += report.associated;
        writeln!(
            log,
            "frame {} {} {} {} {} {}",
            report.index,
            report.tracked,
            u8::from(report.keyframe),
            report.associated,
            report.created.depth_created,
            report.created.triangulated
        )
        .unwrap();
        if let Some(e) = report.loop_event {
            writeln!(
                log,
                "loop query {} match {} shared {} inliers {} cost {:.6e} -> {:.6e} iterations {} converged {}",
                e.query_frame,
                e.match_frame,
                e.shared,
                e.inliers,
                e.initial_cost,
                e.final_cost,
                e.iterations,
                u8::from(e.converged)
            )
            .unwrap();
        }
    }
    Ok(RunOutput {
        trajectory: slam.trajectory(),
        online: slam.online_trajectory(),
        map_snapshot: slam.map().snapshot(),
        log,
        loops: slam.loops().to_vec(),
        keyframes: slam.map().keyframes.len(),
        points: slam.map().len(),
        associations,
    })
}

/// Densifies and runs the whole sequence.
pub fn run_source<S: FrameSource + ?Sized>(source: &S, config: &RunConfig) -> Result<RunOutput> {
    let densified = densify_sequence(source, config)?;
    run_with_depth(source, config, &densified)
}

/// Opens `config.dataset` and runs it.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let dataset = Dataset::open(&config.dataset)?;
    run_source(&dataset, config)
}

/// Writes `trajectory.txt`, `trajectory_online.txt`, `map.txt`, `run.log`
/// and `config.txt` into `dir`.
pub fn write_run(dir: &Path, config: &RunConfig, output: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    output.trajectory.write(&dir.join("trajectory.txt"))?;
    output.online.write(&dir.join("trajectory_online.txt"))?;
    for (name, text) in [
        ("map.txt", output.map_snapshot.as_str()),
        ("run.log", output.log.as_str()),
        ("config.txt", config.to_kv().as_str()),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig {
            dataset: PathBuf::from("data/loop"),
            densification: Densification::InterpolationOnly,
            theta: 3.5,
            association: false,
            loop_closing: false,
            pso: PsoConfig {
                swarm_size: 12,
                iterations: 3,
                inertia: 0.6,
                seed: 99,
                seed_origin: false,
                ..PsoConfig::default()
            },
            predictor_seed: 1,
            split_seed: 2,
            overlap_radius: 5,
            warm_start: true,
        };
        let text = cfg.to_kv();
        let back = RunConfig::from_kv(&KvFile::parse(&text, "cfg.txt").unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_and_bad_theta_rejected() {
        let kv = KvFile::parse("thetta = 2\n", "c.txt").unwrap();
        assert!(matches!(RunConfig::from_kv(&kv), Err(Error::Config(_))));
        let kv = KvFile::parse("theta = 0\nassociation = on\n", "c.txt").unwrap();
        assert!(RunConfig::from_kv(&kv).is_err());
        let kv = KvFile::parse("theta = 0\nassociation = off\n", "c.txt").unwrap();
        assert!(RunConfig::from_kv(&kv).is_ok());
    }

    #[test]
    fn densification_names() {
        for d in Densification::ALL {
            assert_eq!(d.name().parse::<Densification>().unwrap(), d);
        }
        assert!("bilinear".parse::<Densification>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn any_valid_config_round_trips(
            dir in "[a-z0-9_/]{1,20}",
            interp: bool,
            theta in 1e-3f64..50.0,
            association: bool,
            loop_closing: bool,
            swarm in 2usize..64,
            iterations in 0usize..200,
            coeffs in proptest::array::uniform3(0.0f64..3.0),
            halfwidth in 1e-3f64..2.0,
            seeds in proptest::array::uniform3(proptest::num::u64::ANY),
            seed_origin: bool,
            radius in 0usize..32,
            warm_start: bool,
        ) {
            let cfg = RunConfig {
                dataset: PathBuf::from(dir),
                densification: if interp { Densification::InterpolationOnly } else { Densification::PanoDars },
                theta,
                association,
                loop_closing,
                pso: PsoConfig {
                    swarm_size: swarm,
                    iterations,
                    inertia: coeffs[0],
                    cognitive: coeffs[1],
                    social: coeffs[2],
                    seed: seeds[0],
                    search_halfwidth: halfwidth,
                    seed_origin,
                },
                predictor_seed: seeds[1],
                split_seed: seeds[2],
                overlap_radius: radius,
                warm_start,
            };
            let back = RunConfig::from_kv(&KvFile::parse(&cfg.to_kv(), "cfg.txt").unwrap()).unwrap();
            proptest::prop_assert_eq!(back, cfg);
        }
    }
}
