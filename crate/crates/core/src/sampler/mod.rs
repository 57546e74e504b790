//! The change-point Markov chain: latent draws, regime moves, parameter and graph updates.

pub(crate) mod chain;
mod config;
mod drj;
mod hyper_update;
mod latent_draw;
mod log;
mod phi_moves;
mod split_point;
mod state;
mod transitions;

pub use chain::{run_chain, MoveCounters, PhaseTimings, Sampler};
pub use config::{GraphMode, SamplerConfig};
pub use drj::{drj_step, DrjComponent, DrjOutcome};
pub use hyper_update::update_mean_hyper;
pub use latent_draw::{draw_latent, draw_latent_row, shift_nominal_blocks};
pub use log::{ChainMeta, ConstRouteCounts, PosteriorLog, RegimeSnapshot, Snapshot};
pub use phi_moves::{split_distribution_for, split_merge_phi, split_probability, swap_phi, PhiContext, PhiMove};
pub use split_point::{anchor_points, loglik_from_stats, split_point_distribution};
pub use state::{initial_state, regime_bounds, PriorConstCache, SamplerState};
pub use transitions::{count_transitions, log_phi_prior, update_transitions, TransitionModel};
