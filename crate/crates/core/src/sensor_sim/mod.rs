//! Synthetic sensor data: drive paths, corridor worlds, feature
//! observations, tilted-LiDAR depth and the dataset file layout.

mod dataset;
mod lidar;
mod observe;
mod path;
mod world;

pub use dataset::{
    generate_dataset, groundtruth, simulate_sequence, write_dataset, Dataset, DatasetConfig, DatasetManifest,
    FrameData, SimulatedSequence, FORMAT_VERSION,
};
pub use lidar::{overlap_region, simulate_lidar, PixelMask, RigCalibration, SparseDepthMap};
pub use observe::{
    render_context, simulate_frame, visible_landmarks, ImageContext, Observation, ObservationConfig, SKY_RANGE,
};
pub use path::{vehicle_camera_pose, DrivePath, Scenario};
pub use world::{generate_world, Facade, Landmark, SurfaceModel, SurfaceView, World, WorldConfig, GROUND_Z};
