use nalgebra::Vector3;

use crate::depth_refine::DenseDepthMap;
use crate::error::{Error, Result};
use crate::geometry::{PanoramicCamera, PoseSE3};
use crate::sensor_sim::{Observation, PixelMask, SparseDepthMap};

/// One input frame with its densified depth.
#[derive(Clone, Debug)]
pub struct Frame {
    pub index: usize,
    pub timestamp: f64,
    pub observations: Vec<Observation>,
    /// Unit bearing of each observation in the camera frame.
    pub bearings: Vec<Vector3<f64>>,
    pub sparse: SparseDepthMap,
    /// Refined depth, defined only on `overlap`.
    pub depth: DenseDepthMap,
    pub overlap: PixelMask,
    pub pose: PoseSE3,
    pub is_keyframe: bool,
}

impl Frame {
    /// Builds a frame. Depth outside the overlap mask is discarded.
    pub fn new(
        index: usize,
        timestamp: f64,
        observations: Vec<Observation>,
        sparse: SparseDepthMap,
        mut depth: DenseDepthMap,
        overlap: PixelMask,
        camera: &PanoramicCamera,
    ) -> Result<Self> {
        let size = (camera.width(), camera.height());
        if (depth.width, depth.height) != size
            || (overlap.width, overlap.height) != size
            || (sparse.width, sparse.height) != size
        {
            return Err(Error::InvalidInput(format!(
                "frame {index}: depth, overlap and sparse maps must be {}x{}",
                size.0, size.1
            )));
        }
        for r in 0..size.1 {
            for c in 0..size.0 {
                if !overlap.get(c, r) {
                    depth.invalidate(c, r);
                }
            }
        }
        let bearings = observations.iter().map(|o| camera.bearing(&o.pixel)).collect();
        Ok(Self {
            index,
            timestamp,
            observations,
            bearings,
            sparse,
            depth,
            overlap,
            pose: PoseSE3::identity(),
            is_keyframe: false,
        })
    }

    /// Whether observation `slot` falls inside the overlap region.
    pub fn in_overlap(&self, slot: usize, camera: &PanoramicCamera) -> bool {
        camera
            .pixel_index(&self.observations[slot].pixel)
            .is_some_and(|(c, r)| self.overlap.get(c, r))
    }

    /// Refined depth at observation `slot`, or `None` outside the overlap.
    pub fn depth_at(&self, slot: usize, camera: &PanoramicCamera) -> Option<f64> {
        if !self.in_overlap(slot, camera) {
            return None;
        }
        let px = self.observations[slot].pixel;
        self.depth.sample(px.u, px.v)
    }
}

/// Map point matched to each observation slot of a frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackedMatches {
    slots: Vec<Option<usize>>,
}

impl TrackedMatches {
    pub fn new(len: usize) -> Self {
        Self { slots: vec![None; len] }
    }

    /// Fails when a point occupies more than one slot.
    pub fn from_slots(slots: Vec<Option<usize>>) -> Result<Self> {
        let mut seen: Vec<usize> = slots.iter().flatten().copied().collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("a map point is matched to two slots".into()));
        }
        Ok(Self { slots })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<usize> {
        self.slots[slot]
    }

    pub fn set(&mut self, slot: usize, point: Option<usize>) {
        self.slots[slot] = point;
    }

    pub fn matched_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn slots(&self) -> &[Option<usize>] {
        &self.slots
    }

    /// `(slot, point id)` for every matched slot.
    pub fn matched(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.slots.iter().enumerate().filter_map(|(i, s)| s.map(|p| (i, p)))
    }
}
