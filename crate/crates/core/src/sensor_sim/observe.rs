use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::world::{SurfaceModel, World};
use crate::geometry::{PanoramicCamera, PixelCoord, PoseSE3};

/// A simulated feature detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub landmark_id: u64,
    pub pixel: PixelCoord,
    /// Matching key; equals `landmark_id` unless the match was corrupted.
    pub descriptor_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationConfig {
    /// Standard deviation of the pixel noise.
    pub noise_px: f64,
    /// Fraction of observations whose descriptor is swapped for another landmark's.
    pub mismatch_rate: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            noise_px: 0.5,
            mismatch_rate: 0.05,
            min_range: 1.0,
            max_range: 50.0,
        }
    }
}

/// Landmarks that are in range and not hidden behind a surface, as
/// `(landmark_id, point in camera frame)`, ordered by id.
pub fn visible_landmarks(
    world: &World,
    pose: &PoseSE3,
    min_range: f64,
    max_range: f64,
) -> Vec<(u64, Vector3<f64>)> {
    let center = pose.translation;
    let view = world.surfaces.view(&center, max_range);
    let mut out: Vec<_> = world
        .landmarks_near(&center, max_range)
        .into_iter()
        .filter_map(|l| {
            let range = (l.position - center).norm();
            if range < min_range || range > max_range || !view.is_visible(&center, &l.position) {
                return None;
            }
            Some((l.id, pose.inverse_transform_point(&l.position)))
        })
        .collect();
    out.sort_by_key(|(id, _)| *id);
    out
}

/// Projects the visible landmarks with Gaussian pixel noise and corrupts a
/// `mismatch_rate` fraction of descriptors. Output is ordered by landmark id.
pub fn simulate_frame<R: Rng>(
    world: &World,
    pose: &PoseSE3,
    cam: &PanoramicCamera,
    config: &ObservationConfig,
    rng: &mut R,
) -> Vec<Observation> {
    let visible = visible_landmarks(world, pose, config.min_range, config.max_range);
    let noise = Normal::new(0.0, config.noise_px.max(0.0)).expect("finite noise");
    let h = cam.height() as f64;
    let mut out = Vec::with_capacity(visible.len());
    for (id, p) in &visible {
        let Ok(mut px) = cam.project(p) else { continue };
        if config.noise_px > 0.0 {
            px.u = cam.wrap_u(px.u + noise.sample(rng));
            px.v = (px.v + noise.sample(rng)).clamp(0.0, h * (1.0 - f64::EPSILON));
        }
        out.push(Observation {
            landmark_id: *id,
            pixel: px,
            descriptor_id: *id,
        });
    }
    if config.mismatch_rate > 0.0 && out.len() >= 2 {
        let n = out.len();
        for i in 0..n {
            if rng.random::<f64>() < config.mismatch_rate {
                // any other visible landmark, uniformly
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                out[i].descriptor_id = out[j].landmark_id;
            }
        }
    }
    out
}

/// Coarse range image standing in for the camera frame fed to the depth
/// predictor. Stores log-range sampled at the centres of a `cols x rows` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageContext {
    pub cols: usize,
    pub rows: usize,
    pub log_range: Vec<f64>,
}

/// Range assigned to rays that escape the scene.
pub const SKY_RANGE: f64 = 120.0;

impl ImageContext {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.log_range[row * self.cols + col]
    }
}

/// Renders the coarse context grid for a camera pose.
pub fn render_context(
    surfaces: &SurfaceModel,
    pose: &PoseSE3,
    cam: &PanoramicCamera,
    cols: usize,
    rows: usize,
) -> ImageContext {
    let center = pose.translation;
    let view = surfaces.view(&center, SKY_RANGE);
    let sx = cam.width() as f64 / cols as f64;
    let sy = cam.height() as f64 / rows as f64;
    let mut log_range = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let px = PixelCoord::new((c as f64 + 0.5) * sx, (r as f64 + 0.5) * sy);
            let dir = pose.transform_vector(&cam.bearing(&px));
            let range = view.raycast(&center, &dir, SKY_RANGE).unwrap_or(SKY_RANGE);
            log_range.push(range.ln());
        }
    }
    ImageContext {
        cols,
        rows,
        log_range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor_sim::world::{Landmark, SurfaceModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_world(n: usize) -> World {
        // landmarks on a ring at 20 m, 2 m below the camera
        let landmarks = (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                Landmark {
                    id: i as u64,
                    position: Vector3::new(20.0 * a.cos(), 20.0 * a.sin(), 0.0),
                }
            })
            .collect();
        World::new(1, landmarks, SurfaceModel::new(Vec::new()))
    }

    fn pose() -> PoseSE3 {
        crate::sensor_sim::vehicle_camera_pose(&nalgebra::Vector2::zeros(), 0.0, 2.0)
    }

    #[test]
    fn noiseless_pixels_are_exact_projections() {
        let world = grid_world(100);
        let cam = PanoramicCamera::new(512, 256).unwrap();
        let cfg = ObservationConfig {
            noise_px: 0.0,
            mismatch_rate: 0.0,
            ..Default::default()
        };
        let obs = simulate_frame(&world, &pose(), &cam, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(obs.len(), 100);
        for o in &obs {
            let p = pose().inverse_transform_point(&world.landmarks[o.landmark_id as usize].position);
            assert_eq!(o.pixel, cam.project(&p).unwrap());
            assert_eq!(o.descriptor_id, o.landmark_id);
        }
    }

    #[test]
    fn out_of_range_landmark_is_absent() {
        let mut world = grid_world(10);
        world = World::new(
            1,
            world
                .landmarks
                .iter()
                .copied()
                .chain([Landmark {
                    id: 99,
                    position: Vector3::new(60.0, 0.0, 0.0),
                }])
                .collect(),
            SurfaceModel::new(Vec::new()),
        );
        let cam = PanoramicCamera::new(512, 256).unwrap();
        let obs = simulate_frame(&world, &pose(), &cam, &ObservationConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(obs.iter().all(|o| o.landmark_id != 99));
        assert_eq!(obs.len(), 10);
    }

    #[test]
    fn mismatch_count_is_binomial() {
        let world = grid_world(500);
        let cam = PanoramicCamera::new(512, 256).unwrap();
        let cfg = ObservationConfig {
            noise_px: 0.0,
            mismatch_rate: 0.1,
            ..Default::default()
        };
        let obs = simulate_frame(&world, &pose(), &cam, &cfg, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(obs.len(), 500);
        let wrong = obs.iter().filter(|o| o.descriptor_id != o.landmark_id).count() as f64;
        // 3 sigma of Binomial(500, 0.1)
        let sigma = (500.0f64 * 0.1 * 0.9).sqrt();
        assert!((wrong - 50.0).abs() <= 3.0 * sigma, "wrong ids: {wrong}");
        let ids: std::collections::HashSet<_> = obs.iter().map(|o| o.landmark_id).collect();
        assert!(obs.iter().all(|o| ids.contains(&o.descriptor_id)));
    }

    #[test]
    fn context_sees_ground_below_horizon() {
        let cam = PanoramicCamera::new(512, 256).unwrap();
        let ctx = render_context(&SurfaceModel::flat(), &pose(), &cam, 64, 32);
        // bottom row looks almost straight down: range close to camera height
        assert!(ctx.at(0, 31).exp() < 2.1);
        assert_eq!(ctx.at(0, 0), SKY_RANGE.ln());
    }
}
