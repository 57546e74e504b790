use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ht2::hotelling_t2_scan;
use super::scenario::{Scenario, ScenarioSpec};
use super::score::{flags_to_values, score};
use crate::error::Result;
use crate::pipeline::fit;
use crate::sampler::SamplerConfig;

/// One row of `bench_results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub method: String,
    pub replication: usize,
    pub seed: u64,
    pub detected: bool,
    pub fpr: f64,
    /// Semicolon-separated false-positive day labels.
    pub false_positive_days: String,
    pub runtime_s: f64,
}

/// Benchmark settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub scenarios: Vec<Scenario>,
    pub replications: usize,
    /// Rows per day of the generated streams.
    pub obs_per_day: usize,
    pub base_seed: u64,
    pub config: SamplerConfig,
    pub ht2_window: usize,
    pub ht2_alpha: f64,
}

impl BenchPlan {
    /// Desk scale: 10 replications of 50 rows per day; `long` switches to 50 replications of 200.
    pub fn new(scenarios: Vec<Scenario>, config: SamplerConfig, long: bool) -> Self {
        Self {
            scenarios,
            replications: if long { 50 } else { 10 },
            obs_per_day: if long { 200 } else { 50 },
            base_seed: config.seed,
            config,
            ht2_window: 3,
            ht2_alpha: 0.005,
        }
    }
}

pub const METHODS: [&str; 2] = ["regimewatch", "ht2"];

fn days_string(days: &[i64]) -> String {
    days.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(";")
}

/// Runs generate, fit and score for every scenario and replication, with the HT2 baseline.
pub fn run_bench(plan: &BenchPlan) -> Result<Vec<BenchRow>> {
    let jobs: Vec<(Scenario, usize)> = plan
        .scenarios
        .iter()
        .flat_map(|&s| (0..plan.replications).map(move |r| (s, r)))
        .collect();
    let rows: Vec<Vec<BenchRow>> = jobs
        .par_iter()
        .map(|&(scenario, rep)| -> Result<Vec<BenchRow>> {
            let seed = plan.base_seed.wrapping_add(rep as u64);
            let spec = ScenarioSpec {
                seed,
                obs_per_day: plan.obs_per_day,
                ..ScenarioSpec::new(scenario)
            };
            let sim = spec.generate()?;
            let labels: Vec<i64> = sim.data.days.iter().map(|d| d.day).collect();
            let start = Instant::now();
            let cfg = SamplerConfig {
                seed,
                ..plan.config.clone()
            };
            let log = fit(&sim.data, &cfg)?;
            let bw = score(&labels, &log.changepoint_probs(), &sim.truth, cfg.cutoff);
            let bw_time = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let scan = hotelling_t2_scan(&sim.data, plan.ht2_window, plan.ht2_alpha);
            let ht = score(&labels, &flags_to_values(&scan.flags), &sim.truth, 0.5);
            let ht_time = start.elapsed().as_secs_f64();
            let row = |method: &str, r: super::score::BenchResult, t: f64| BenchRow {
                scenario,
                method: method.to_string(),
                replication: rep,
                seed,
                detected: r.detected,
                fpr: r.fpr,
                false_positive_days: days_string(&r.false_positive_days),
                runtime_s: t,
            };
            Ok(vec![row(METHODS[0], bw, bw_time), row(METHODS[1], ht, ht_time)])
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| crate::error::Error::io(path, e))
}
