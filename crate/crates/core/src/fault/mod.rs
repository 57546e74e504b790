//! Hellinger-based diagnosis of which variables drive a detected change.

mod hellinger;
mod measure;
mod report;

pub use hellinger::{affinity_mc, gaussian_hellinger_sq, hellinger, AffinityEstimate};
pub use measure::MixtureMeasure;
pub use report::{
    fault_report, first_order_loss, pair_losses, rank_desc, total_effect_loss, write_fault_outputs,
    FaultReport, PairLosses, VariableSummary, MIN_DISTANCE,
};
