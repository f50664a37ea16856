//! Panoramic camera model, rigid/similarity transforms, two-view
//! triangulation and closed-form point-set alignment.

mod align;
mod camera;
mod pose;
mod triangulate;

pub use align::{umeyama, PointAlignment};
pub use camera::{PanoramicCamera, PixelCoord};
pub use pose::{skew, PoseSE3, Sim3, Sim3Tangent};
pub use triangulate::{angle_between, triangulate, TriangulationFailure, DEFAULT_PARALLAX_MIN};
