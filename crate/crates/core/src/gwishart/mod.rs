//! G-Wishart machinery in the `|Λ|^{(ν-2)/2} exp(-tr(DΛ)/2)` parameterization.

mod cholesky;
mod normconst;
mod sampler;

pub use cholesky::{complete_cholesky, complete_cholesky_in_place, CholFactor};
pub use normconst::{
    log_norm_const_decomposable, log_norm_const_empty, log_norm_const_full,
    log_norm_const_laplace, log_norm_const_mc, ConstCounters, McEstimate, NormConstRouter,
};
pub use sampler::{
    log_gwishart_unnorm, sample_gwishart, sample_gwishart_matrix, sample_wishart, GPrecision,
};
