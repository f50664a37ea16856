//! Trajectory storage and accuracy metrics.

mod metrics;
mod trajectory;

pub use metrics::{
    align, associate, ate, evaluate, rte_rre, AlignMode, LengthErrors, MetricsReport, RelativeErrors, DEFAULT_LENGTHS,
    MAX_TIME_DIFFERENCE,
};
pub use trajectory::Trajectory;
