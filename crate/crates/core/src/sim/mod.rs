//! Simulated scenarios, the Hotelling T² baseline and detection scoring.

mod bench;
mod ht2;
mod scenario;
mod score;

pub use bench::{run_bench, write_bench_csv, BenchPlan, BenchRow, METHODS};
pub use ht2::{hotelling_t2_scan, Ht2Scan};
pub use scenario::{Scenario, ScenarioSpec, SimulatedData};
pub use score::{flags_to_values, score, BenchResult};
