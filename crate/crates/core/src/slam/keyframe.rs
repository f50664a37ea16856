use super::frame::{Frame, TrackedMatches};
use super::map::{KeyObservation, Keyframe, MapState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeyframePolicy {
    /// New keyframe when tracked matches fall below this fraction of the
    /// matches held by the last keyframe.
    pub ratio: f64,
    /// New keyframe at this many frames since the last one.
    pub gap_max: usize,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        Self {
            ratio: 0.9,
            gap_max: 10,
        }
    }
}

/// State of the most recent keyframe as seen by the policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LastKeyframe {
    pub frame: usize,
    pub matches: usize,
}

impl KeyframePolicy {
    pub fn decide(&self, frame: usize, tracked: usize, last: Option<LastKeyframe>) -> bool {
        match last {
            None => true,
            Some(k) => {
                (tracked as f64) < self.ratio * k.matches as f64 || frame.saturating_sub(k.frame) >= self.gap_max
            }
        }
    }
}

/// Appends the frame as a keyframe and links its matched points.
/// Returns the keyframe index.
pub fn insert_keyframe(frame: &Frame, matches: &TrackedMatches, map: &mut MapState) -> usize {
    let observations = frame
        .observations
        .iter()
        .zip(&frame.bearings)
        .map(|(o, b)| KeyObservation {
            descriptor: o.descriptor_id,
            pixel: o.pixel,
            bearing: *b,
        })
        .collect();
    let kf = map.keyframes.len();
    map.keyframes.push(Keyframe::new(frame.index, frame.timestamp, frame.pose, observations));
    for (slot, id) in matches.matched() {
        map.link(kf, slot, id);
    }
    kf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_frame_is_keyframe() {
        assert!(KeyframePolicy::default().decide(0, 0, None));
    }

    #[test]
    fn steady_tracking_is_not_keyframe() {
        let last = Some(LastKeyframe { frame: 10, matches: 400 });
        assert!(!KeyframePolicy::default().decide(11, 400, last));
        assert!(!KeyframePolicy::default().decide(19, 400, last));
    }

    #[test]
    fn halved_matches_or_long_gap_is_keyframe() {
        let last = Some(LastKeyframe { frame: 10, matches: 400 });
        assert!(KeyframePolicy::default().decide(11, 200, last));
        assert!(KeyframePolicy::default().decide(20, 400, last));
        // boundary: exactly at the ratio is not below it
        assert!(!KeyframePolicy::default().decide(11, 360, last));
    }
}
