//! Core algorithms for the CRANE dual-graph multimodal recommender.
//!
//! Everything in this crate is deterministic, allocation-based numerics with
//! no IO: sparse/dense kernels, graph construction, the recursive cross-modal
//! attention forward pass, exact reverse-mode gradients, Adam, the training
//! loop, and ranking metrics. File formats, configuration files and the CLI
//! live in the companion `crane-cli` crate.
//!
//! The crate is `no_std` (with `alloc`); tests link `std` as usual.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adam;
pub mod backward;
pub mod config;
pub mod dense;
pub mod error;
pub mod eval;
pub mod forward;
pub mod graph;
pub mod loss;
pub(crate) mod math;
pub mod params;
pub mod rng;
pub mod sampler;
pub mod sparse;
pub mod synth;
pub mod train;

pub use config::{Activation, Aggregation, LayerReadout, TrainConfig, Variant};
pub use dense::DenseMatrix;
pub use error::CoreError;
pub use graph::{InteractionGraph, SampledGraph, SemanticGraph};
pub use params::{ModelParameters, ParamBlocks};
pub use rng::SeededRng;
pub use sparse::CompressedSparseMatrix;
