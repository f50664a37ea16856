use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::geometry::{PixelCoord, PoseSE3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PointOrigin {
    Triangulated,
    DepthCreated,
}

impl PointOrigin {
    pub fn name(&self) -> &'static str {
        match self {
            PointOrigin::Triangulated => "triangulated",
            PointOrigin::DepthCreated => "depth",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapPoint {
    pub id: usize,
    pub position: Vector3<f64>,
    pub descriptor: u64,
    pub origin: PointOrigin,
    pub depth_modified: bool,
    /// Range of the depth sample that last placed this point.
    pub last_assoc_depth: Option<f64>,
    pub last_assoc_frame: Option<usize>,
    /// Keyframe (index into `MapState::keyframes`) whose pose anchors the point.
    pub reference_keyframe: usize,
    /// `(keyframe index, observation slot)` pairs.
    pub observations: Vec<(usize, usize)>,
    /// Last frame in which tracking matched the point.
    pub last_seen: usize,
}

/// A feature as stored in a keyframe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyObservation {
    pub descriptor: u64,
    pub pixel: PixelCoord,
    pub bearing: Vector3<f64>,
}

#[derive(Clone, Debug)]
pub struct Keyframe {
    pub frame: usize,
    pub timestamp: f64,
    pub pose: PoseSE3,
    pub observations: Vec<KeyObservation>,
    /// Map point per observation slot.
    pub points: Vec<Option<usize>>,
    /// First slot carrying each descriptor.
    pub descriptor_slots: HashMap<u64, usize>,
}

impl Keyframe {
    pub fn new(frame: usize, timestamp: f64, pose: PoseSE3, observations: Vec<KeyObservation>) -> Self {
        let mut descriptor_slots = HashMap::with_capacity(observations.len());
        for (i, o) in observations.iter().enumerate() {
            descriptor_slots.entry(o.descriptor).or_insert(i);
        }
        Self {
            frame,
            timestamp,
            pose,
            points: vec![None; observations.len()],
            observations,
            descriptor_slots,
        }
    }

    pub fn slot_of(&self, descriptor: u64) -> Option<usize> {
        self.descriptor_slots.get(&descriptor).copied()
    }
}

/// All map points and keyframes. Points are only ever added or moved.
#[derive(Clone, Debug, Default)]
pub struct MapState {
    pub points: Vec<MapPoint>,
    pub keyframes: Vec<Keyframe>,
}

impl MapState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds a point and returns its id.
    #[allow(clippy::too_many_arguments)]
    pub fn add_point(
        &mut self,
        position: Vector3<f64>,
        descriptor: u64,
        origin: PointOrigin,
        last_assoc_depth: Option<f64>,
        frame: usize,
        reference_keyframe: usize,
    ) -> usize {
        let id = self.points.len();
        self.points.push(MapPoint {
            id,
            position,
            descriptor,
            origin,
            depth_modified: false,
            last_assoc_frame: last_assoc_depth.map(|_| frame),
            last_assoc_depth,
            reference_keyframe,
            observations: Vec::new(),
            last_seen: frame,
        });
        id
    }

    /// Records that keyframe `kf` sees point `id` in `slot`.
    pub fn link(&mut self, kf: usize, slot: usize, id: usize) {
        self.keyframes[kf].points[slot] = Some(id);
        let obs = &mut self.points[id].observations;
        if !obs.contains(&(kf, slot)) {
            obs.push((kf, slot));
        }
    }

    /// Line-oriented snapshot: `id x y z origin depth_modified`.
    pub fn snapshot(&self) -> String {
        let mut s = String::from("# id x y z origin depth_modified\n");
        for p in &self.points {
            writeln!(
                s,
                "{} {:.6} {:.6} {:.6} {} {}",
                p.id,
                p.position.x,
                p.position.y,
                p.position.z,
                p.origin.name(),
                u8::from(p.depth_modified)
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_links_dedupe() {
        let mut m = MapState::new();
        let obs = vec![
            KeyObservation {
                descriptor: 5,
                pixel: PixelCoord::new(1.0, 1.0),
                bearing: Vector3::z(),
            };
            2
        ];
        m.keyframes.push(Keyframe::new(0, 0.0, PoseSE3::identity(), obs));
        let a = m.add_point(Vector3::zeros(), 5, PointOrigin::DepthCreated, Some(3.0), 0, 0);
        let b = m.add_point(Vector3::x(), 6, PointOrigin::Triangulated, None, 0, 0);
        assert_eq!((a, b), (0, 1));
        m.link(0, 0, a);
        m.link(0, 0, a);
        assert_eq!(m.points[a].observations, vec![(0, 0)]);
        assert_eq!(m.keyframes[0].slot_of(5), Some(0));
        assert_eq!(m.points[a].last_assoc_frame, Some(0));
        assert_eq!(m.points[b].last_assoc_frame, None);
        assert!(m.snapshot().contains("1 1.000000 0.000000 0.000000 triangulated 0"));
    }
}
