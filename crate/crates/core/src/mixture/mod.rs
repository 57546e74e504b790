//! Per-regime Gaussian graphical mixtures with a truncated stick-breaking prior.

mod components;
mod hyper;
mod params;

pub use components::{
    draw_sticks, gibbs_components, launch_size, log_stick_collapsed, mixture_loglik,
    split_merge_swap_components, stats_by_component, stick_weights, ComponentState, SplitMergeContext, SplitMergeOutcome,
};
pub use hyper::{log_marginal_likelihood, ngw_posterior, NgwHyper, SuffStats};
pub use params::{sample_component, sample_regime_params, RegimeParams};
