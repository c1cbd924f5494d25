//! No-reference video quality assessment.
//!
//! The pipeline runs in stages that communicate through files so that the
//! neural encoders can live in a separate process:
//!
//! 1. [`media`] decodes Y4M streams or PNG frame directories.
//! 2. [`fdf`] ranks patches by inter-frame residual energy and assembles
//!    paired frame/residual mosaics.
//! 3. [`prompt`] turns container metadata into quality-aware captioning
//!    prompts.
//! 4. An external encoder writes embeddings in the [`features`] format.
//! 5. [`fusion`] segments the video and pools embeddings into one vector.
//! 6. [`regressor`] maps fused vectors to quality scores.
//! 7. [`eval`] measures SRCC/PLCC/KRCC under repeated random splits.
//!
//! [`pipeline`] drives the stages from a [`pipeline::PipelineConfig`];
//! [`synthetic`] generates stand-in inputs for trying them out.

pub mod error;
pub mod eval;
pub mod fdf;
pub mod features;
pub mod fusion;
pub mod media;
pub mod pipeline;
pub mod prompt;
pub mod regressor;
pub mod synthetic;

pub use error::{Error, Result};
