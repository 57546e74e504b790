//! Change-point detection for daily-batched, mixed-type data streams.
//!
//! Each regime of consecutive days is modelled by a truncated Dirichlet-process
//! mixture of Gaussians whose precision matrices share one sparse graph. The
//! regime vector, mixture parameters and graph are sampled jointly by MCMC,
//! and detected changes are explained with Hellinger-based per-variable losses.

pub mod calibrate;
pub mod data;
pub mod dist;
pub mod error;
pub mod fault;
pub mod graph;
pub mod gwishart;
pub mod linalg;
pub mod mixture;
pub mod rng;
pub mod pipeline;
pub mod sampler;
pub mod sim;

pub use error::{Error, Result};
pub use graph::Graph;
