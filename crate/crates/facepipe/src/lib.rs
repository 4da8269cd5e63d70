//! Face swap and reenactment pipeline built on `facepipe-core`, with the
//! CLI plumbing and the pose explorer HTTP service.

pub mod cli;
pub mod config;
pub mod curate;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod service;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
