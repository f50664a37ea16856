//! On-disk synthetic sequences.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.txt          key = value: scenario, seed, camera, noise and rig settings
//! groundtruth.txt       timestamp tx ty tz qx qy qz qw (camera-to-world)
//! frames/000000.obs     "frame <i> <timestamp>" then "<landmark_id> <descriptor_id> <u> <v>"
//! frames/000000.depth   "frame <i> <width> <height>" then "<col> <row> <depth>"
//! frames/000000.ctx     "frame <i> <cols> <rows>" then one line of log-ranges per grid row
//! ```
//!
//! Floats are written in shortest round-trip form so a read-back frame is
//! bit-identical to the simulated one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lidar::{simulate_lidar, RigCalibration, SparseDepthMap};
use super::observe::{render_context, simulate_frame, ImageContext, Observation, ObservationConfig};
use super::path::{vehicle_camera_pose, Scenario};
use super::world::{generate_world, WorldConfig};
use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::{PanoramicCamera, PixelCoord, PoseSE3};
use crate::kv::{KvFile, KvWriter};

pub const FORMAT_VERSION: u32 = 1;

/// Everything that determines a generated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Distance between consecutive frames along the path, metres.
    pub spacing: f64,
    /// Time between consecutive frames, seconds.
    pub interval: f64,
    pub camera_height: f64,
    /// Landmarks per metre of path.
    pub landmark_density: f64,
    pub observation: ObservationConfig,
    pub rig: RigCalibration,
    pub lidar_noise: f64,
    pub world: WorldConfig,
}

impl DatasetConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self {
            scenario,
            seed,
            width: 512,
            height: 256,
            spacing: 2.5,
            interval: 0.25,
            camera_height: 2.0,
            landmark_density: 8.0,
            observation: ObservationConfig::default(),
            rig: RigCalibration::default(),
            lidar_noise: 0.02,
            world: WorldConfig::default(),
        }
    }

    pub fn camera(&self) -> Result<PanoramicCamera> {
        PanoramicCamera::new(self.width, self.height)
    }

    pub fn context_size(&self) -> (usize, usize) {
        (self.width / 8, self.height / 8)
    }
}

/// Independent random stream per frame and purpose.
pub(crate) fn frame_rng(seed: u64, frame: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((frame as u64) << 4 | purpose);
    rng
}

const STREAM_OBS: u64 = 1;
const STREAM_LIDAR: u64 = 2;

/// One simulated time step.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameData {
    pub index: usize,
    pub timestamp: f64,
    pub observations: Vec<Observation>,
    pub sparse: SparseDepthMap,
    pub context: ImageContext,
}

/// In-memory sequence: ground truth plus all frames.
#[derive(Clone, Debug)]
pub struct SimulatedSequence {
    pub config: DatasetConfig,
    pub trajectory_length: f64,
    pub groundtruth: Trajectory,
    pub frames: Vec<FrameData>,
}

/// Ground-truth frame poses for a scenario.
pub fn groundtruth(config: &DatasetConfig) -> Result<(Trajectory, f64)> {
    let path = config.scenario.path();
    let len = path.length();
    let s_of: Vec<f64> = if path.is_closed() {
        let n = (len / config.spacing).round().max(1.0) as usize;
        (0..n).map(|i| i as f64 * len / n as f64).collect()
    } else {
        let n = (len / config.spacing).floor() as usize;
        (0..=n).map(|i| (i as f64 * config.spacing).min(len)).collect()
    };
    let traj = Trajectory::new(
        s_of.iter()
            .enumerate()
            .map(|(i, s)| {
                let pose = vehicle_camera_pose(&path.position(*s), path.heading(*s), config.camera_height);
                (i as f64 * config.interval, pose)
            })
            .collect(),
    )?;
    Ok((traj, len))
}

/// Simulates every frame of a sequence in memory.
pub fn simulate_sequence(config: &DatasetConfig) -> Result<SimulatedSequence> {
    if !(0.0..1.0).contains(&config.observation.mismatch_rate) {
        return Err(Error::Config(format!(
            "mismatch rate must be in [0, 1), got {}",
            config.observation.mismatch_rate
        )));
    }
    config.rig.validate()?;
    let cam = config.camera()?;
    let (gt, len) = groundtruth(config)?;
    let count = (len * config.landmark_density).round() as usize;
    if count == 0 {
        return Err(Error::Config("landmark density too low".into()));
    }
    let world = generate_world(config.seed, &config.scenario.path(), &config.world, count);
    let (cols, rows) = config.context_size();
    let frames = gt
        .iter()
        .enumerate()
        .map(|(i, (t, pose))| FrameData {
            index: i,
            timestamp: t,
            observations: simulate_frame(
                &world,
                pose,
                &cam,
                &config.observation,
                &mut frame_rng(config.seed, i, STREAM_OBS),
            ),
            sparse: simulate_lidar(
                &world.surfaces,
                pose,
                &config.rig,
                &cam,
                config.lidar_noise,
                &mut frame_rng(config.seed, i, STREAM_LIDAR),
            ),
            context: render_context(&world.surfaces, pose, &cam, cols, rows),
        })
        .collect();
    Ok(SimulatedSequence {
        config: config.clone(),
        trajectory_length: len,
        groundtruth: gt,
        frames,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn manifest_text(seq: &SimulatedSequence) -> String {
    let c = &seq.config;
    let (axis, angle) = c
        .rig
        .lidar_from_camera
        .rotation
        .axis_angle()
        .map(|(a, ang)| (a.into_inner(), ang))
        .unwrap_or((Vector3::x(), 0.0));
    let rv = axis * angle;
    let t = c.rig.lidar_from_camera.translation;
    let mut w = KvWriter::new();
    w.comment("panoslam synthetic dataset")
        .put("format", FORMAT_VERSION)
        .put("scenario", c.scenario)
        .put("seed", c.seed)
        .put("frame_count", seq.frames.len())
        .put("trajectory_length", seq.trajectory_length)
        .put("spacing", c.spacing)
        .put("interval", c.interval)
        .put("camera_height", c.camera_height)
        .put("camera_width", c.width)
        .put("camera_height_px", c.height)
        .put("landmark_density", c.landmark_density)
        .put("pixel_noise", c.observation.noise_px)
        .put("mismatch_rate", c.observation.mismatch_rate)
        .put("min_range", c.observation.min_range)
        .put("max_range", c.observation.max_range)
        .put("rig.translation", format!("{} {} {}", t.x, t.y, t.z))
        .put("rig.rotation", format!("{} {} {}", rv.x, rv.y, rv.z))
        .put("rig.tilt", c.rig.lidar_tilt)
        .put("rig.vertical_fov", c.rig.vertical_fov)
        .put("rig.beam_count", c.rig.beam_count)
        .put("rig.azimuth_step", c.rig.azimuth_step)
        .put("rig.max_range", c.rig.max_range)
        .put("lidar_noise", c.lidar_noise)
        .put("groundtruth", "groundtruth.txt");
    w.finish()
}

pub(crate) fn observations_text(frame: &FrameData) -> String {
    let mut s = format!("frame {} {}\n", frame.index, frame.timestamp);
    for o in &frame.observations {
        writeln!(s, "{} {} {} {}", o.landmark_id, o.descriptor_id, o.pixel.u, o.pixel.v).unwrap();
    }
    s
}

pub(crate) fn sparse_text(index: usize, sparse: &SparseDepthMap) -> String {
    let mut s = format!("frame {} {} {}\n", index, sparse.width, sparse.height);
    for ((c, r), d) in &sparse.entries {
        writeln!(s, "{c} {r} {d}").unwrap();
    }
    s
}

pub(crate) fn context_text(index: usize, ctx: &ImageContext) -> String {
    let mut s = format!("frame {} {} {}\n", index, ctx.cols, ctx.rows);
    for r in 0..ctx.rows {
        let row: Vec<String> = (0..ctx.cols).map(|c| ctx.at(c, r).to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Writes a simulated sequence in the dataset layout.
pub fn write_dataset(seq: &SimulatedSequence, dir: &Path) -> Result<()> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    write_file(&dir.join("manifest.txt"), &manifest_text(seq))?;
    seq.groundtruth.write(&dir.join("groundtruth.txt"))?;
    for f in &seq.frames {
        let stem = frames_dir.join(format!("{:06}", f.index));
        write_file(&stem.with_extension("obs"), &observations_text(f))?;
        write_file(&stem.with_extension("depth"), &sparse_text(f.index, &f.sparse))?;
        write_file(&stem.with_extension("ctx"), &context_text(f.index, &f.context))?;
    }
    Ok(())
}

/// Simulates and writes a dataset in one go.
pub fn generate_dataset(config: &DatasetConfig, dir: &Path) -> Result<SimulatedSequence> {
    let seq = simulate_sequence(config)?;
    write_dataset(&seq, dir)?;
    Ok(seq)
}

/// Typed view of `manifest.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub frame_count: usize,
    pub trajectory_length: f64,
    pub groundtruth_file: String,
}

fn parse_vec3(kv: &KvFile, key: &str) -> Result<Vector3<f64>> {
    let s: String = kv.require(key)?;
    let v: Vec<f64> = s
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(kv.path(), 0, format!("bad vector for '{key}': {e}")))?;
    if v.len() != 3 {
        return Err(Error::parse(kv.path(), 0, format!("'{key}' needs three numbers")));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KvFile::read(path)?;
        let format: u32 = kv.require("format")?;
        if format != FORMAT_VERSION {
            return Err(Error::parse(path, 0, format!("unsupported dataset format {format}")));
        }
        let scenario: Scenario = kv
            .require::<String>("scenario")?
            .parse()
            .map_err(|e: Error| Error::parse(path, 0, e.to_string()))?;
        let mut config = DatasetConfig::new(scenario, kv.require("seed")?);
        config.spacing = kv.require("spacing")?;
        config.interval = kv.require("interval")?;
        config.camera_height = kv.require("camera_height")?;
        config.width = kv.require("camera_width")?;
        config.height = kv.require("camera_height_px")?;
        config.landmark_density = kv.require("landmark_density")?;
        config.observation = ObservationConfig {
            noise_px: kv.require("pixel_noise")?,
            mismatch_rate: kv.require("mismatch_rate")?,
            min_range: kv.require("min_range")?,
            max_range: kv.require("max_range")?,
        };
        config.rig = RigCalibration {
            lidar_from_camera: PoseSE3::new(
                UnitQuaternion::from_scaled_axis(parse_vec3(&kv, "rig.rotation")?),
                parse_vec3(&kv, "rig.translation")?,
            ),
            lidar_tilt: kv.require("rig.tilt")?,
            vertical_fov: kv.require("rig.vertical_fov")?,
            beam_count: kv.require("rig.beam_count")?,
            azimuth_step: kv.require("rig.azimuth_step")?,
            max_range: kv.require("rig.max_range")?,
        };
        config.lidar_noise = kv.require("lidar_noise")?;
        config.camera().map_err(|e| Error::parse(path, 0, e.to_string()))?;
        Ok(Self {
            config,
            frame_count: kv.require("frame_count")?,
            trajectory_length: kv.require("trajectory_length")?,
            groundtruth_file: kv.require("groundtruth")?,
        })
    }
}

/// A dataset directory opened for reading. Frames are loaded on demand.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub groundtruth: Trajectory,
}

fn header<'a>(path: &Path, lines: &mut impl Iterator<Item = (usize, &'a str)>, fields: usize) -> Result<Vec<&'a str>> {
    let Some((_, line)) = lines.next() else {
        return Err(Error::parse(path, 1, "missing header"));
    };
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != fields || parts[0] != "frame" {
        return Err(Error::parse(path, 1, format!("malformed header '{line}'")));
    }
    Ok(parts)
}

fn num<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse()
        .map_err(|e| Error::parse(path, line, format!("bad number '{s}': {e}")))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(&dir.join("manifest.txt"))?;
        let groundtruth = Trajectory::read(&dir.join(&manifest.groundtruth_file))?;
        if groundtruth.len() != manifest.frame_count {
            return Err(Error::parse(
                dir.join(&manifest.groundtruth_file),
                0,
                format!(
                    "{} poses but manifest declares {} frames",
                    groundtruth.len(),
                    manifest.frame_count
                ),
            ));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            groundtruth,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frame_count == 0
    }

    pub fn camera(&self) -> PanoramicCamera {
        self.manifest.config.camera().expect("validated on open")
    }

    fn read_text(path: &Path) -> Result<String> {
        std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
    }

    pub fn frame(&self, index: usize) -> Result<FrameData> {
        let stem = self.dir.join("frames").join(format!("{index:06}"));
        let cam = self.camera();

        let obs_path = stem.with_extension("obs");
        let text = Self::read_text(&obs_path)?;
        let mut lines = data_lines(&text);
        let h = header(&obs_path, &mut lines, 3)?;
        let timestamp: f64 = num(&obs_path, 1, h[2])?;
        let mut observations = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::parse(&obs_path, ln, "expected 'landmark_id descriptor_id u v'"));
            }
            let pixel = PixelCoord::new(num(&obs_path, ln, f[2])?, num(&obs_path, ln, f[3])?);
            if !(pixel.u >= 0.0 && pixel.u < cam.width() as f64 && pixel.v >= 0.0 && pixel.v < cam.height() as f64) {
                return Err(Error::parse(&obs_path, ln, "pixel outside the image"));
            }
            observations.push(Observation {
                landmark_id: num(&obs_path, ln, f[0])?,
                descriptor_id: num(&obs_path, ln, f[1])?,
                pixel,
            });
        }

        let depth_path = stem.with_extension("depth");
        let text = Self::read_text(&depth_path)?;
        let mut lines = data_lines(&text);
        let h = header(&depth_path, &mut lines, 4)?;
        let (w, hh): (usize, usize) = (num(&depth_path, 1, h[2])?, num(&depth_path, 1, h[3])?);
        let mut entries = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::parse(&depth_path, ln, "expected 'col row depth'"));
            }
            entries.push((
                (num(&depth_path, ln, f[0])?, num(&depth_path, ln, f[1])?),
                num::<f64>(&depth_path, ln, f[2])?,
            ));
        }
        let sparse =
            SparseDepthMap::new(w, hh, entries).map_err(|e| Error::parse(&depth_path, 0, e.to_string()))?;

        let ctx_path = stem.with_extension("ctx");
        let text = Self::read_text(&ctx_path)?;
        let mut lines = data_lines(&text);
        let h = header(&ctx_path, &mut lines, 4)?;
        let (cols, rows): (usize, usize) = (num(&ctx_path, 1, h[2])?, num(&ctx_path, 1, h[3])?);
        let mut log_range = Vec::with_capacity(cols * rows);
        for (ln, line) in lines {
            for f in line.split_whitespace() {
                log_range.push(num::<f64>(&ctx_path, ln, f)?);
            }
        }
        if log_range.len() != cols * rows {
            return Err(Error::parse(&ctx_path, 0, format!("expected {} values, got {}", cols * rows, log_range.len())));
        }

        Ok(FrameData {
            index,
            timestamp,
            observations,
            sparse,
            context: ImageContext { cols, rows, log_range },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        let mut c = DatasetConfig::new(Scenario::Straight500m, 5);
        c.width = 128;
        c.height = 64;
        c.spacing = 25.0;
        c
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let seq = generate_dataset(&small(), dir.path()).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest.config, small());
        assert_eq!(ds.len(), seq.frames.len());
        for f in &seq.frames {
            assert_eq!(&ds.frame(f.index).unwrap(), f);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate_sequence(&small()).unwrap();
        let b = simulate_sequence(&small()).unwrap();
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn loop_length_in_manifest() {
        let (gt, len) = groundtruth(&DatasetConfig::new(Scenario::Loop1km, 1)).unwrap();
        assert!((950.0..=1050.0).contains(&len));
        assert_eq!(gt.len(), 400);
    }

    #[test]
    fn missing_frame_names_path() {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(&small(), dir.path()).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        let err = ds.frame(999).unwrap_err();
        assert!(err.to_string().contains("000999.obs"), "{err}");
    }
}
