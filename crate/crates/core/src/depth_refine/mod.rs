//! Dense depth from a frozen predictor, corrected against sparse LiDAR and
//! tuned per frame by a particle swarm over channel-wise scales and biases.

mod correct;
mod maps;
mod predictor;
mod pso;
mod refine;

pub use correct::{correct, interpolate_sparse, SiteInterpolant};
pub use maps::{CorrectionMap, DenseDepthMap};
pub use predictor::{predict, AuxiliaryParams, DepthPredictor, FeatureGrid, SamplePlan, ToyPredictor, TOY_CHANNELS, TOY_DEPTH_BIAS};
pub use pso::{minimize, PsoConfig, PsoOutcome};
pub use refine::{refine, split_sparse, RefineStatus, Refinement, MIN_REFINE_PIXELS};
