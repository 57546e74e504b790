//! Observed data, variable metadata and the latent Gaussian encoding.

mod boxcox;
mod latent;
mod missing;
mod spec;
mod stream;

pub use boxcox::{boxcox_inverse, boxcox_preprocess, boxcox_transform, guerrero_cv, BoxCoxParams};
pub use latent::{decode_row, init_latent, Cell, LatentLayout, LatentMatrix};
pub use missing::{add_missingness_indicators, drop_zero_variance};
pub use spec::{read_spec, write_spec, Kind, VariableSpec};
pub use stream::{ingest, write_stream_csv, DataStream, DayBatch};
