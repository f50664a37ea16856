use super::association::depth_associate;
use super::bundle::{local_bundle_adjust, BundleConfig};
use super::frame::{Frame, TrackedMatches};
use super::keyframe::{insert_keyframe, KeyframePolicy, LastKeyframe};
use super::map::MapState;
use super::mapping::{map_new_points, MappingConfig, MappingStats};
use super::tracking::{track, TrackingConfig};
use crate::error::{Error, Result};
use crate::evaluation::Trajectory;
use crate::geometry::{PanoramicCamera, PoseSE3};
use crate::loop_closing::{close_loop, detect_loop, LoopConfig, LoopCorrection, LoopEvent};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlamConfig {
    pub tracking: TrackingConfig,
    pub keyframes: KeyframePolicy,
    pub mapping: MappingConfig,
    pub bundle: BundleConfig,
    /// Association distance threshold in meters; `None` disables association.
    pub association: Option<f64>,
    /// `None` disables loop closing.
    pub loop_closing: Option<LoopConfig>,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            tracking: TrackingConfig::default(),
            keyframes: KeyframePolicy::default(),
            mapping: MappingConfig::default(),
            bundle: BundleConfig::default(),
            association: Some(super::association::DEFAULT_THETA),
            loop_closing: Some(LoopConfig::default()),
        }
    }
}

/// Per-frame bookkeeping. A frame's pose is stored relative to its
/// reference keyframe so keyframe corrections carry over to it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    pub reference_keyframe: usize,
    pub relative: PoseSE3,
    /// Pose as estimated when the frame was processed.
    pub online: PoseSE3,
    pub keyframe: bool,
    pub tracked: usize,
    pub associated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    pub index: usize,
    pub pose: PoseSE3,
    pub tracked: usize,
    pub keyframe: bool,
    pub associated: usize,
    pub created: MappingStats,
    pub loop_event: Option<LoopEvent>,
}

/// A closure with the trajectory just before and just after it.
#[derive(Clone, Debug)]
pub struct LoopRecord {
    pub event: LoopEvent,
    pub before: Trajectory,
    pub after: Trajectory,
}

/// Sequential tracking and mapping over a stream of frames.
pub struct Slam {
    camera: PanoramicCamera,
    config: SlamConfig,
    map: MapState,
    records: Vec<FrameRecord>,
    last_keyframe: Option<LastKeyframe>,
    last_loop_frame: Option<usize>,
    loops: Vec<LoopRecord>,
}

impl Slam {
    pub fn new(camera: PanoramicCamera, config: SlamConfig) -> Result<Self> {
        if let Some(theta) = config.association {
            if !(theta > 0.0) {
                return Err(Error::Config(format!("association threshold must be positive, got {theta}")));
            }
        }
        if config.bundle.window < 2 {
            return Err(Error::Config("bundle adjustment window must hold at least 2 keyframes".into()));
        }
        Ok(Self {
            camera,
            config,
            map: MapState::new(),
            records: Vec::new(),
            last_keyframe: None,
            last_loop_frame: None,
            loops: Vec::new(),
        })
    }

    pub fn map(&self) -> &MapState {
        &self.map
    }

    pub fn records(&self) -> &[FrameRecord] {
        &self.records
    }

    pub fn loops(&self) -> &[LoopRecord] {
        &self.loops
    }

    fn current_pose(&self, r: &FrameRecord) -> PoseSE3 {
        self.map.keyframes[r.reference_keyframe].pose * r.relative
    }

    /// Latest estimate of every processed frame.
    pub fn trajectory(&self) -> Trajectory {
        let mut t = Trajectory::default();
        for r in &self.records {
            t.push(r.timestamp, self.current_pose(r)).expect("frame timestamps increase");
        }
        t
    }

    /// Poses as they were estimated frame by frame.
    pub fn online_trajectory(&self) -> Trajectory {
        let mut t = Trajectory::default();
        for r in &self.records {
            t.push(r.timestamp, r.online).expect("frame timestamps increase");
        }
        t
    }

    /// Constant-velocity prediction from the two previous frames.
    fn predict(&self) -> PoseSE3 {
        match self.records.as_slice() {
            [] => PoseSE3::identity(),
            [only] => self.current_pose(only),
            [.., a, b] => {
                let (pa, pb) = (self.current_pose(a), self.current_pose(b));
                pb * (pa.inverse() * pb)
            }
        }
    }

    pub fn process(&mut self, frame: &mut Frame) -> Result<FrameReport> {
        if let Some(last) = self.records.last() {
            if frame.index <= last.index || !(frame.timestamp > last.timestamp) {
                return Err(Error::InvalidInput(format!(
                    "frame {} does not follow frame {}",
                    frame.index, last.index
                )));
            }
        }
        if self.map.keyframes.is_empty() {
            return Ok(self.bootstrap(frame));
        }
        let (mut matches, pose) = track(frame, &self.map, &self.predict(), &self.config.tracking)?;
        frame.pose = pose;
        for (_, id) in matches.matched() {
            self.map.points[id].last_seen = frame.index;
        }
        let previous_kf = self.map.keyframes.len() - 1;
        let associated = match self.config.association {
            Some(theta) => depth_associate(frame, &matches, &mut self.map, theta, &self.camera, previous_kf)?.updated,
            None => 0,
        };
        let tracked = matches.matched_count();
        frame.is_keyframe = self.config.keyframes.decide(frame.index, tracked, self.last_keyframe);
        if !frame.is_keyframe {
            let relative = self.map.keyframes[previous_kf].pose.inverse() * frame.pose;
            self.records.push(FrameRecord {
                index: frame.index,
                timestamp: frame.timestamp,
                reference_keyframe: previous_kf,
                relative,
                online: frame.pose,
                keyframe: false,
                tracked,
                associated,
            });
            return Ok(FrameReport {
                index: frame.index,
                pose: frame.pose,
                tracked,
                keyframe: false,
                associated,
                created: MappingStats::default(),
                loop_event: None,
            });
        }

        let kf = insert_keyframe(frame, &matches, &mut self.map);
        for (_, id) in matches.matched() {
            let p = &mut self.map.points[id];
            if p.depth_modified && p.last_assoc_frame == Some(frame.index) {
                p.reference_keyframe = kf;
            }
        }
        let created = map_new_points(frame, &mut matches, kf, &mut self.map, &self.camera, &self.config.mapping);
        let first = (kf + 1).saturating_sub(self.config.bundle.window);
        let window: Vec<usize> = (first..=kf).collect();
        if window.len() >= 2 {
            local_bundle_adjust(&mut self.map, &window, Some(frame.index), &self.config.bundle);
        }
        frame.pose = self.map.keyframes[kf].pose;
        self.last_keyframe = Some(LastKeyframe {
            frame: frame.index,
            matches: matches.matched_count(),
        });
        self.records.push(FrameRecord {
            index: frame.index,
            timestamp: frame.timestamp,
            reference_keyframe: kf,
            relative: PoseSE3::identity(),
            online: frame.pose,
            keyframe: true,
            tracked,
            associated,
        });
        let loop_event = self.try_close_loop(kf, frame.index)?;
        if loop_event.is_some() {
            frame.pose = self.map.keyframes[kf].pose;
            self.records.last_mut().unwrap().online = frame.pose;
        }
        Ok(FrameReport {
            index: frame.index,
            pose: frame.pose,
            tracked,
            keyframe: true,
            associated,
            created,
            loop_event,
        })
    }

    fn bootstrap(&mut self, frame: &mut Frame) -> FrameReport {
        frame.pose = PoseSE3::identity();
        frame.is_keyframe = true;
        let mut matches = TrackedMatches::new(frame.observations.len());
        let kf = insert_keyframe(frame, &matches, &mut self.map);
        let created = map_new_points(frame, &mut matches, kf, &mut self.map, &self.camera, &self.config.mapping);
        self.last_keyframe = Some(LastKeyframe {
            frame: frame.index,
            matches: matches.matched_count(),
        });
        self.records.push(FrameRecord {
            index: frame.index,
            timestamp: frame.timestamp,
            reference_keyframe: kf,
            relative: PoseSE3::identity(),
            online: frame.pose,
            keyframe: true,
            tracked: 0,
            associated: 0,
        });
        FrameReport {
            index: frame.index,
            pose: frame.pose,
            tracked: 0,
            keyframe: true,
            associated: 0,
            created,
            loop_event: None,
        }
    }

    fn try_close_loop(&mut self, kf: usize, frame: usize) -> Result<Option<LoopEvent>> {
        let Some(cfg) = self.config.loop_closing else {
            return Ok(None);
        };
        if self.last_loop_frame.is_some_and(|f| frame < f + cfg.cooldown) {
            return Ok(None);
        }
        let Some(candidate) = detect_loop(&self.map, kf, &cfg) else {
            return Ok(None);
        };
        let before = self.trajectory();
        let (event, correction) = close_loop(&mut self.map, &candidate, &cfg)?;
        self.rescale_records(&correction);
        self.last_loop_frame = Some(frame);
        self.loops.push(LoopRecord {
            event,
            before,
            after: self.trajectory(),
        });
        Ok(Some(event))
    }

    /// Keyframe poses lost their scale in the correction; relative frame
    /// offsets take it instead.
    fn rescale_records(&mut self, correction: &LoopCorrection) {
        for r in &mut self.records {
            if let Some(c) = correction.corrected_of(r.reference_keyframe) {
                r.relative.translation *= c.scale;
            }
        }
    }
}
