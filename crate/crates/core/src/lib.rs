//! Differentiable cell architecture search driven by an ensemble
//! Gumbel-Softmax sampler.
//!
//! A cell is a DAG whose edges may each carry any subset of a fixed menu of
//! primitive operations. The subset on an edge is a binary code; codes are
//! sampled as the element-wise maximum of `M` Gumbel-Softmax one-hots, so a
//! single sampler can produce edges with several active operations. Network
//! weights and the per-edge distributions are trained together by
//! backpropagation through a straight-through relaxation of the sampled code.
//!
//! Module map:
//!
//! - [`tensor`]: reverse-mode automatic differentiation on a dynamic tape.
//! - [`gumbel`]: Gumbel noise, Gumbel-Max and Gumbel-Softmax.
//! - [`egs`]: the ensemble sampler and its exact oracles.
//! - [`space`]: primitives, architecture codes, cells and the mixed-op forward pass.
//! - [`model`]: the classifier wrapped around a cell.
//! - [`search`]: joint search, derivation, retraining and the random baseline.
//! - [`datasets`]: synthetic two-moons, spirals and parity data.
//! - [`config`], [`commands`], [`audit`]: run configuration and the command layer
//!   behind the `egsnas` binary.

pub mod audit;
pub mod commands;
pub mod config;
pub mod datasets;
pub mod egs;
pub mod error;
pub mod gumbel;
pub mod model;
pub mod search;
pub mod space;
pub mod tensor;

pub use error::{Error, Result};
