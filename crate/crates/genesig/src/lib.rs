//! Discovery of compact discriminative gene signatures from labeled
//! expression matrices.
//!
//! The crate trains dense neural networks on expression data, explains their
//! predictions with a family of attribution methods, distills the
//! attributions into small per-class gene sets backed by rank-sum statistics,
//! and cross-validates the resulting signature. A synthetic-data generator
//! with planted differential genes provides ground truth for end-to-end
//! checks, and the `genesig` binary exposes every stage as a subcommand.

pub mod attribution;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod pipeline;
pub mod signature;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
