pub mod cli;
pub mod depth_refine;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod kv;
pub mod loop_closing;
pub mod run;
pub mod sensor_sim;
pub mod slam;

pub use error::{Error, Result};
