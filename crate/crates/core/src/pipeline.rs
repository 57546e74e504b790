//! Preprocessing and fitting glue shared by the command line and the benchmarks.

use crate::data::{add_missingness_indicators, drop_zero_variance, DataStream};
use crate::error::Result;
use crate::sampler::{run_chain, PosteriorLog, SamplerConfig};

/// Adds missingness indicators, then drops zero-variance variables.
///
/// Returns the prepared stream and the names of dropped variables.
pub fn prepare_stream(ds: &DataStream) -> (DataStream, Vec<String>) {
    drop_zero_variance(&add_missingness_indicators(ds))
}

/// Prepares the stream and runs one chain on it.
pub fn fit(ds: &DataStream, config: &SamplerConfig) -> Result<PosteriorLog> {
    let (prepared, _) = prepare_stream(ds);
    run_chain(&prepared, config)
}
