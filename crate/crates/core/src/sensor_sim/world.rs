use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::path::DrivePath;

/// Height of the analytic ground plane.
pub const GROUND_Z: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Vector3<f64>,
}

/// Vertical building slab: a box that is axis-aligned in its own frame
/// (x along the road, y to the left, z up from the ground).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Facade {
    pub center: Vector2<f64>,
    pub yaw: f64,
    pub half_length: f64,
    pub half_depth: f64,
    pub height: f64,
    /// Local y of the face that looks onto the road (`+half_depth` or `-half_depth`).
    pub road_face_y: f64,
}

impl Facade {
    fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        Vector3::new(c * dx + s * dy, -s * dx + c * dy, p.z)
    }

    fn dir_to_local(&self, d: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z)
    }

    pub fn local_to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(
            self.center.x + c * local.x - s * local.y,
            self.center.y + s * local.x + c * local.y,
            local.z,
        )
    }

    pub fn footprint_radius(&self) -> f64 {
        self.half_length.hypot(self.half_depth)
    }

    /// Horizontal distance from a ground point to the footprint (0 inside).
    pub fn footprint_distance(&self, p: &Vector2<f64>) -> f64 {
        let l = self.to_local(&Vector3::new(p.x, p.y, 0.0));
        let dx = (l.x.abs() - self.half_length).max(0.0);
        let dy = (l.y.abs() - self.half_depth).max(0.0);
        dx.hypot(dy)
    }

    /// Entry distance of a ray into the slab, if any.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.to_local(origin);
        let d = self.dir_to_local(dir);
        let lo = [-self.half_length, -self.half_depth, 0.0];
        let hi = [self.half_length, self.half_depth, self.height];
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if o[k] < lo[k] || o[k] > hi[k] {
                    return None;
                }
            } else {
                let t1 = (lo[k] - o[k]) / d[k];
                let t2 = (hi[k] - o[k]) / d[k];
                let (a, b) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                t_near = t_near.max(a);
                t_far = t_far.min(b);
                if t_near > t_far {
                    return None;
                }
            }
        }
        (t_near > 1e-9).then_some(t_near)
    }
}

const GRID_CELL: f64 = 32.0;

fn cell_of(p: &Vector2<f64>) -> (i64, i64) {
    ((p.x / GRID_CELL).floor() as i64, (p.y / GRID_CELL).floor() as i64)
}

/// Uniform-grid index over items with a centre and bounding radius.
#[derive(Clone, Debug, Default)]
struct GridIndex {
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl GridIndex {
    fn insert(&mut self, idx: usize, center: &Vector2<f64>, radius: f64) {
        let lo = cell_of(&(center - Vector2::repeat(radius)));
        let hi = cell_of(&(center + Vector2::repeat(radius)));
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                self.cells.entry((i, j)).or_default().push(idx);
            }
        }
    }

    /// Sorted, de-duplicated candidates whose cells overlap the query disk.
    fn query(&self, center: &Vector2<f64>, radius: f64) -> Vec<usize> {
        let lo = cell_of(&(center - Vector2::repeat(radius)));
        let hi = cell_of(&(center + Vector2::repeat(radius)));
        let mut out = Vec::new();
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                if let Some(v) = self.cells.get(&(i, j)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Analytic scene: ground plane plus building slabs.
#[derive(Clone, Debug, Default)]
pub struct SurfaceModel {
    pub facades: Vec<Facade>,
    index: GridIndex,
}

impl SurfaceModel {
    pub fn new(facades: Vec<Facade>) -> Self {
        let mut index = GridIndex::default();
        for (i, f) in facades.iter().enumerate() {
            index.insert(i, &f.center, f.footprint_radius());
        }
        Self { facades, index }
    }

    /// Ground plane only.
    pub fn flat() -> Self {
        Self::new(Vec::new())
    }

    /// Restricts ray casting to slabs that can be reached within `radius`.
    pub fn view(&self, center: &Vector3<f64>, radius: f64) -> SurfaceView<'_> {
        let c = Vector2::new(center.x, center.y);
        let facades = self
            .index
            .query(&c, radius)
            .into_iter()
            .map(|i| &self.facades[i])
            .filter(|f| (f.center - c).norm() <= radius + f.footprint_radius())
            .collect();
        SurfaceView { facades }
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceView<'a> {
    facades: Vec<&'a Facade>,
}

impl SurfaceView<'_> {
    /// Distance to the first surface hit along a unit ray, within `max_range`.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<f64> {
        let mut best = f64::INFINITY;
        if dir.z < -1e-12 {
            let t = (GROUND_Z - origin.z) / dir.z;
            if t > 1e-9 {
                best = t;
            }
        }
        for f in &self.facades {
            if let Some(t) = f.intersect(origin, dir) {
                if t < best {
                    best = t;
                }
            }
        }
        (best <= max_range).then_some(best)
    }

    /// True when `target` is the first surface along the ray from `origin`.
    pub fn is_visible(&self, origin: &Vector3<f64>, target: &Vector3<f64>) -> bool {
        let delta = target - origin;
        let range = delta.norm();
        if range <= 0.0 {
            return false;
        }
        let dir = delta / range;
        let tol = 1e-6 * (1.0 + range);
        match self.raycast(origin, &dir, range + 1.0) {
            Some(t) => t >= range - tol,
            None => true,
        }
    }
}

/// Knobs for the corridor world generator.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub setback: (f64, f64),
    pub facade_depth: f64,
    pub facade_height: (f64, f64),
    pub facade_length: (f64, f64),
    pub facade_gap: (f64, f64),
    /// Minimum distance between any facade footprint and the drive path.
    pub min_clearance: f64,
    pub ground_fraction: f64,
    pub ground_half_width: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            setback: (9.0, 13.0),
            facade_depth: 8.0,
            facade_height: (6.0, 18.0),
            facade_length: (10.0, 25.0),
            facade_gap: (2.0, 6.0),
            min_clearance: 6.0,
            ground_fraction: 0.3,
            ground_half_width: 8.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct World {
    pub seed: u64,
    pub landmarks: Vec<Landmark>,
    pub surfaces: SurfaceModel,
    landmark_index: GridIndex,
}

impl World {
    pub fn new(seed: u64, landmarks: Vec<Landmark>, surfaces: SurfaceModel) -> Self {
        let mut landmark_index = GridIndex::default();
        for (i, l) in landmarks.iter().enumerate() {
            landmark_index.insert(i, &Vector2::new(l.position.x, l.position.y), 0.0);
        }
        Self {
            seed,
            landmarks,
            surfaces,
            landmark_index,
        }
    }

    /// Landmarks within `radius` (horizontal) of `center`, in id order.
    pub fn landmarks_near(&self, center: &Vector3<f64>, radius: f64) -> Vec<&Landmark> {
        let c = Vector2::new(center.x, center.y);
        self.landmark_index
            .query(&c, radius)
            .into_iter()
            .map(|i| &self.landmarks[i])
            .filter(|l| (Vector2::new(l.position.x, l.position.y) - c).norm() <= radius)
            .collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..range.1)
    } else {
        range.0
    }
}

/// Lines both sides of `path` with building slabs and scatters
/// `landmark_count` landmarks over the road-facing walls and the road
/// surface. Deterministic in `seed`.
pub fn generate_world(seed: u64, path: &DrivePath, config: &WorldConfig, landmark_count: usize) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path_samples = path.samples(2.0);
    let len = path.length();

    let mut facades = Vec::new();
    for side in [1.0f64, -1.0] {
        let mut s = uniform(&mut rng, (0.0, 5.0));
        loop {
            let length = uniform(&mut rng, config.facade_length);
            let gap = uniform(&mut rng, config.facade_gap);
            let setback = uniform(&mut rng, config.setback);
            let height = uniform(&mut rng, config.facade_height);
            let mid = s + length / 2.0;
            if s + length > len {
                break;
            }
            let normal = path.left_normal(mid) * side;
            let half_depth = config.facade_depth / 2.0;
            let facade = Facade {
                center: path.position(mid) + normal * (setback + half_depth),
                yaw: path.heading(mid),
                half_length: length / 2.0,
                half_depth,
                height,
                road_face_y: -side * half_depth,
            };
            let clear = path_samples
                .iter()
                .all(|p| facade.footprint_distance(p) >= config.min_clearance);
            if clear {
                facades.push(facade);
            }
            s += length + gap;
        }
    }
    let surfaces = SurfaceModel::new(facades);

    let areas: Vec<f64> = surfaces
        .facades
        .iter()
        .map(|f| 2.0 * f.half_length * f.height)
        .collect();
    let total_area: f64 = areas.iter().sum();

    let mut landmarks = Vec::with_capacity(landmark_count);
    for id in 0..landmark_count as u64 {
        let on_ground = total_area <= 0.0 || rng.random::<f64>() < config.ground_fraction;
        let position = if on_ground {
            let s = rng.random_range(0.0..len);
            let lateral = rng.random_range(-config.ground_half_width..config.ground_half_width);
            let p = path.position(s) + path.left_normal(s) * lateral;
            Vector3::new(p.x, p.y, GROUND_Z)
        } else {
            let mut pick = rng.random::<f64>() * total_area;
            let mut idx = areas.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            let f = &surfaces.facades[idx];
            let x = rng.random_range(-f.half_length..f.half_length);
            let z = rng.random_range(0.2..f.height);
            f.local_to_world(&Vector3::new(x, f.road_face_y, z))
        };
        landmarks.push(Landmark { id, position });
    }
    World::new(seed, landmarks, surfaces)
}
