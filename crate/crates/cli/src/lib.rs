//! Pipeline orchestration for `rallyproc`: run configuration, the
//! content-addressed artifact cache, the stages, and exports.

pub mod cache;
pub mod config;
pub mod export;
pub mod pipeline;

pub use config::{RunConfig, Suite};
pub use pipeline::{run_pipeline, Manifest, Pipeline};
