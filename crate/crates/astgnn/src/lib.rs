//! Adaptive spatial-temporal graph neural networks, desk scale.
//!
//! The crate trains small traffic-style forecasting models whose graph
//! structure is *learned* from node embeddings rather than given, and then
//! sparsifies that learned graph with differentiable L0 gates until the model
//! is partially or fully localised (each node forecasting from its own
//! history alone). Everything runs in fp64 on the CPU with bitwise
//! reproducible results for a fixed seed.
//!
//! ## Modules
//!
//! - [`tensor`]: dense fp64 tensors with reverse-mode gradients and an
//!   instrumented FLOP counter.
//! - [`graph`]: adaptive adjacency from node embeddings, node-adaptive graph
//!   convolution, hard-concrete edge gates and the frozen-edge mask.
//! - [`model`]: the two architectures (recurrent `agcrn`, attention
//!   `agformer`), parameter initialisation and checkpoints.
//! - [`data`]: CSV ingestion/export, synthetic series generation, windowing,
//!   chronological splits and normalisation.
//! - [`metrics`]: MAE / RMSE / MAPE in denormalised units.
//! - [`flops`]: analytic cost model plus instrumented counts and speedups.
//! - [`sparsify`]: prediction and L0 losses, Adam, pretraining, adaptive
//!   graph sparsification and the reinitialise-and-retrain control.
//! - [`harness`]: experiment orchestration behind the `astgnn` binary.

pub mod data;
pub mod error;
pub mod flops;
pub mod graph;
pub mod harness;
pub mod metrics;
#[path = "model/mod.rs"]
pub mod model;
pub mod sparsify;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
