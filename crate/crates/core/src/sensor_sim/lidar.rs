use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::world::SurfaceModel;
use crate::error::{Error, Result};
use crate::geometry::{PanoramicCamera, PoseSE3};

/// Rigid mount and scan pattern of the LiDAR relative to the camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigCalibration {
    /// Maps points from the (untilted) LiDAR frame into the camera frame.
    pub lidar_from_camera: PoseSE3,
    /// Forward pitch-down of the scan head, radians.
    pub lidar_tilt: f64,
    pub vertical_fov: f64,
    pub beam_count: usize,
    pub azimuth_step: f64,
    /// Maximum usable range, metres.
    pub max_range: f64,
}

impl Default for RigCalibration {
    fn default() -> Self {
        Self {
            lidar_from_camera: PoseSE3::from_translation(Vector3::new(0.0, -0.3, -0.5)),
            lidar_tilt: 30f64.to_radians(),
            vertical_fov: 30f64.to_radians(),
            beam_count: 32,
            azimuth_step: 2f64.to_radians(),
            max_range: 80.0,
        }
    }
}

impl RigCalibration {
    pub fn validate(&self) -> Result<()> {
        if self.beam_count < 1 {
            return Err(Error::Config("rig needs at least one beam".into()));
        }
        if !(self.vertical_fov > 0.0) {
            return Err(Error::Config("rig vertical field of view must be positive".into()));
        }
        if !(self.azimuth_step > 0.0) {
            return Err(Error::Config("rig azimuth step must be positive".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::Config("rig max range must be positive".into()));
        }
        Ok(())
    }

    /// Beam elevation angles, lowest first.
    pub fn elevations(&self) -> Vec<f64> {
        if self.beam_count == 1 {
            return vec![0.0];
        }
        let n = self.beam_count as f64 - 1.0;
        (0..self.beam_count)
            .map(|i| -self.vertical_fov / 2.0 + self.vertical_fov * i as f64 / n)
            .collect()
    }

    /// Unit directions of every beam in the camera frame.
    pub fn beam_directions(&self) -> Vec<Vector3<f64>> {
        let tilt = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), -self.lidar_tilt);
        let mount = self.lidar_from_camera.rotation * tilt;
        let steps = (std::f64::consts::TAU / self.azimuth_step).round().max(1.0) as usize;
        let mut dirs = Vec::with_capacity(steps * self.beam_count);
        for e in self.elevations() {
            let (se, ce) = e.sin_cos();
            for j in 0..steps {
                let (sa, ca) = (j as f64 * self.azimuth_step).sin_cos();
                dirs.push(mount * Vector3::new(ce * sa, -se, ce * ca));
            }
        }
        dirs
    }
}

/// Projected LiDAR depth: at most one ray range per integer pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDepthMap {
    pub width: usize,
    pub height: usize,
    /// `((col, row), depth)`, ordered by row then column.
    pub entries: Vec<((usize, usize), f64)>,
}

impl SparseDepthMap {
    /// Builds a map from arbitrary entries, keeping the first entry per pixel.
    pub fn new(width: usize, height: usize, entries: Vec<((usize, usize), f64)>) -> Result<Self> {
        let mut seen = vec![false; width * height];
        let mut kept = Vec::with_capacity(entries.len());
        for ((c, r), d) in entries {
            if c >= width || r >= height {
                return Err(Error::InvalidInput(format!(
                    "sparse depth pixel ({c}, {r}) outside {width}x{height}"
                )));
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "sparse depth at ({c}, {r}) must be positive, got {d}"
                )));
            }
            if !std::mem::replace(&mut seen[r * width + c], true) {
                kept.push(((c, r), d));
            }
        }
        kept.sort_by_key(|((c, r), _)| (*r, *c));
        Ok(Self {
            width,
            height,
            entries: kept,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validity(&self) -> PixelMask {
        let mut m = PixelMask::new(self.width, self.height);
        for ((c, r), _) in &self.entries {
            m.set(*c, *r, true);
        }
        m
    }
}

/// Binary per-pixel mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PixelMask {
    pub width: usize,
    pub height: usize,
    bits: Vec<bool>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True if every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &PixelMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }

    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(i, _)| (i % self.width, i / self.width))
    }
}

/// Casts the scan pattern from the LiDAR mount, keeps returns the camera can
/// also see, and records the camera ray range at each hit pixel.
///
/// `range_noise` is the standard deviation of additive range noise (0 for a
/// noiseless map).
pub fn simulate_lidar<R: Rng>(
    surfaces: &SurfaceModel,
    pose: &PoseSE3,
    rig: &RigCalibration,
    cam: &PanoramicCamera,
    range_noise: f64,
    rng: &mut R,
) -> SparseDepthMap {
    let lidar_origin_cam = rig.lidar_from_camera.translation;
    let origin = pose.transform_point(&lidar_origin_cam);
    let cam_center = pose.translation;
    let view = surfaces.view(&cam_center, rig.max_range + lidar_origin_cam.norm());
    let noise = Normal::new(0.0, range_noise.max(0.0)).expect("finite noise");
    let w = cam.width();
    let mut hit_pixel = vec![false; w * cam.height()];
    let mut entries = Vec::new();
    for d_cam in rig.beam_directions() {
        let dir = pose.transform_vector(&d_cam);
        let Some(t) = view.raycast(&origin, &dir, rig.max_range) else {
            continue;
        };
        let hit = origin + dir * t;
        if !view.is_visible(&cam_center, &hit) {
            continue;
        }
        let Ok(px) = cam.project(&pose.inverse_transform_point(&hit)) else {
            continue;
        };
        let Some((col, row)) = cam.pixel_index(&px) else {
            continue;
        };
        if std::mem::replace(&mut hit_pixel[row * w + col], true) {
            continue;
        }
        // range along the pixel-centre ray, so the entry lies on a surface
        let center_dir = pose.transform_vector(&cam.bearing(&cam.pixel_center(col, row)));
        let Some(depth) = view.raycast(&cam_center, &center_dir, rig.max_range * 2.0) else {
            continue;
        };
        let depth = if range_noise > 0.0 {
            (depth + noise.sample(rng)).max(0.05)
        } else {
            depth
        };
        entries.push(((col, row), depth));
    }
    entries.sort_by_key(|((c, r), _)| (*r, *c));
    SparseDepthMap {
        width: w,
        height: cam.height(),
        entries,
    }
}

/// Union of discrete disks of `radius` pixels around every valid pixel.
/// Columns wrap around the panorama seam; rows are clipped.
pub fn overlap_region(sparse: &SparseDepthMap, radius: usize) -> PixelMask {
    let (w, h) = (sparse.width, sparse.height);
    let mut mask = PixelMask::new(w, h);
    let r = radius as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    for ((c, row), _) in &sparse.entries {
        for (dx, dy) in &offsets {
            let y = *row as i64 + dy;
            if y < 0 || y >= h as i64 {
                continue;
            }
            let x = (*c as i64 + dx).rem_euclid(w as i64);
            mask.set(x as usize, y as usize, true);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor_sim::vehicle_camera_pose;
    use nalgebra::Vector2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cam() -> PanoramicCamera {
        PanoramicCamera::new(512, 256).unwrap()
    }

    fn pose() -> PoseSE3 {
        vehicle_camera_pose(&Vector2::new(3.0, -1.0), 0.4, 2.0)
    }

    fn run(rig: &RigCalibration) -> SparseDepthMap {
        simulate_lidar(
            &SurfaceModel::flat(),
            &pose(),
            rig,
            &cam(),
            0.0,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
    }

    #[test]
    fn flat_ground_matches_ray_plane_oracle() {
        let map = run(&RigCalibration::default());
        assert!(!map.is_empty());
        let p = pose();
        for ((c, r), d) in &map.entries {
            let dir = p.transform_vector(&cam().bearing(&cam().pixel_center(*c, *r)));
            // camera at z = 2 above the plane z = 0
            let t = -2.0 / dir.z;
            assert!((d - t).abs() < 1e-9 * t.max(1.0), "{d} vs {t}");
        }
    }

    #[test]
    fn skyward_beam_leaves_no_entry() {
        let single = |tilt_deg: f64| RigCalibration {
            lidar_tilt: tilt_deg.to_radians(),
            beam_count: 1,
            azimuth_step: std::f64::consts::TAU,
            ..Default::default()
        };
        assert_eq!(run(&single(30.0)).len(), 1);
        assert!(run(&single(-30.0)).is_empty());
    }

    #[test]
    fn rows_move_down_with_tilt() {
        let mean_row = |tilt_deg: f64| {
            let rig = RigCalibration {
                lidar_tilt: tilt_deg.to_radians(),
                ..Default::default()
            };
            let map = run(&rig);
            // forward sector, where tilt pitches the scan towards the ground
            let rows: Vec<f64> = map
                .entries
                .iter()
                .filter(|((c, _), _)| (*c as f64 - 256.0).abs() < 40.0)
                .map(|((_, r), _)| *r as f64)
                .collect();
            assert!(!rows.is_empty());
            rows.iter().sum::<f64>() / rows.len() as f64
        };
        let rows: Vec<f64> = [0.0, 10.0, 20.0, 30.0].iter().map(|t| mean_row(*t)).collect();
        assert!(rows.windows(2).all(|w| w[1] > w[0]), "{rows:?}");
    }

    #[test]
    fn depths_positive_and_unique_pixels() {
        let map = run(&RigCalibration::default());
        let rebuilt = SparseDepthMap::new(map.width, map.height, map.entries.clone()).unwrap();
        assert_eq!(rebuilt, map);
        assert!(map.entries.iter().all(|(_, d)| *d > 0.0));
    }

    #[test]
    fn overlap_disk_sizes() {
        let single = SparseDepthMap::new(64, 32, vec![((10, 10), 5.0)]).unwrap();
        // oracle: enumerate the integer disk directly
        let mut expected = 0;
        for dy in -3i32..=3 {
            for dx in -3i32..=3 {
                if dx * dx + dy * dy <= 9 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 29);
        assert_eq!(overlap_region(&single, 3).count(), expected);
        assert_eq!(overlap_region(&single, 0), single.validity());
        assert_eq!(overlap_region(&SparseDepthMap::empty(64, 32), 5).count(), 0);
    }

    #[test]
    fn overlap_wraps_horizontally() {
        let edge = SparseDepthMap::new(64, 32, vec![((0, 10), 5.0)]).unwrap();
        let m = overlap_region(&edge, 2);
        assert!(m.get(63, 10) && m.get(62, 10));
        assert_eq!(m.count(), 13);
    }
}
