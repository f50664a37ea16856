mod association;
mod bundle;
mod frame;
mod keyframe;
mod map;
mod mapping;
mod pipeline;
mod residual;
mod tracking;

pub use association::{depth_associate, should_update, AssociationStats, DEFAULT_THETA};
pub use bundle::{local_bundle_adjust, BundleConfig, BundleReport};
pub use frame::{Frame, TrackedMatches};
pub use keyframe::{insert_keyframe, KeyframePolicy, LastKeyframe};
pub use map::{KeyObservation, Keyframe, MapPoint, MapState, PointOrigin};
pub use mapping::{map_new_points, MappingConfig, MappingStats};
pub use pipeline::{FrameRecord, FrameReport, LoopRecord, Slam, SlamConfig};
pub use residual::{angular_error, bearing_residual, huber, tangent_basis};
pub use tracking::{estimate_pose, match_descriptors, track, TrackingConfig};
