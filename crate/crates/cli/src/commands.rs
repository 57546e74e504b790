use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use regimewatch::calibrate::{calibrate as run_calibration, change_days};
use regimewatch::data::{boxcox_preprocess, ingest, write_spec, write_stream_csv};
use regimewatch::fault::{fault_report, write_fault_outputs};
use regimewatch::pipeline::{fit as fit_stream, prepare_stream};
use regimewatch::sampler::{run_chain, PosteriorLog};
use regimewatch::sim::{run_bench, score as score_values, write_bench_csv, BenchPlan, Scenario, ScenarioSpec};

use crate::manifest::RunManifest;
use crate::ChainArgs;

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Contents of `truth.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub scenario: Option<String>,
    /// Day labels after which the stream changes.
    pub change_days: Vec<i64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// TOML scenario spec.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    spec: Option<PathBuf>,
    /// Scenario id (A-H) with default settings, instead of `--spec`.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut spec = match (&a.spec, &a.scenario) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioSpec::from_toml(&text)?
        }
        (None, Some(id)) => ScenarioSpec::new(*id),
        (None, None) => bail!("one of --spec or --scenario is required"),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let sim = spec.generate()?;
    out_dir(&a.out)?;
    let mut m = RunManifest::new("simulate", spec.seed);
    m.config(&spec)?;
    let data = a.out.join("data.csv");
    let vars = a.out.join("variables.toml");
    let truth = a.out.join("truth.json");
    write_stream_csv(&data, &sim.data)?;
    write_spec(&vars, &sim.data.variables)?;
    write_json(
        &truth,
        &TruthFile {
            scenario: Some(spec.scenario.to_string()),
            change_days: sim.truth.clone(),
        },
    )?;
    for p in [&data, &vars, &truth] {
        m.output(p);
    }
    m.write(&a.out)
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Data CSV with a `day` column.
    #[arg(long)]
    data: PathBuf,
    /// TOML variable spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated continuous variables to Box-Cox transform before fitting.
    #[arg(long, value_delimiter = ',')]
    boxcox: Option<Vec<String>>,
    #[command(flatten)]
    chain: ChainArgs,
}

/// Contents of `changepoints.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChangepointsFile {
    pub cutoff: f64,
    /// Day labels whose change-point probability reaches the cutoff.
    pub change_days: Vec<i64>,
    /// Most frequent post-burn-in regime vector (1-based labels).
    pub map_regimes: Vec<usize>,
    /// Day labels after which the MAP regime vector changes.
    pub map_change_days: Vec<i64>,
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let cfg = a.chain.resolve()?;
    let mut ds = ingest(&a.data, &a.spec)?;
    let mut m = RunManifest::new("fit", cfg.seed);
    m.config(&cfg)?;
    if let Some(names) = &a.boxcox {
        let idx = names
            .iter()
            .map(|n| {
                ds.variables
                    .iter()
                    .position(|v| &v.name == n)
                    .ok_or_else(|| regimewatch::Error::UnknownColumn(n.clone()))
            })
            .collect::<regimewatch::Result<Vec<_>>>()?;
        let (transformed, params) = boxcox_preprocess(&ds, &idx)?;
        let record: BTreeMap<&str, _> = idx
            .iter()
            .zip(&params)
            .map(|(&k, p)| (ds.variables[k].name.as_str(), *p))
            .collect();
        m.extra("boxcox", &record)?;
        ds = transformed;
    }
    let (prepared, dropped) = prepare_stream(&ds);
    if !dropped.is_empty() {
        m.warn(format!("dropped zero-variance variables: {}", dropped.join(", ")));
    }
    m.extra("dropped_variables", &dropped)?;
    m.extra("latent_variables", &prepared.variables.iter().map(|v| v.name.clone()).collect::<Vec<_>>())?;
    let log = run_chain(&prepared, &cfg)?;
    out_dir(&a.out)?;

    let probs_path = a.out.join("changepoint_probs.csv");
    let mut w = csv::Writer::from_path(&probs_path)?;
    w.write_record(["day", "probability"])?;
    for (d, p) in log.day_labels.iter().zip(log.changepoint_probs()) {
        w.write_record([d.to_string(), p.to_string()])?;
    }
    w.flush()?;
    let map = log.map_phi().unwrap_or_default();
    let cp = ChangepointsFile {
        cutoff: cfg.cutoff,
        change_days: log.detected(cfg.cutoff),
        map_change_days: change_days(&map, &log.day_labels),
        map_regimes: map.iter().map(|r| r + 1).collect(),
    };
    let cp_path = a.out.join("changepoints.json");
    write_json(&cp_path, &cp)?;
    let log_dir = a.out.join("log");
    log.write_dir(&log_dir)?;
    m.timings.insert("sampler_s".into(), log.meta.timings.total);
    for p in [&probs_path, &cp_path, &log_dir] {
        m.output(p);
    }
    m.write(&a.out)
}

#[derive(Args, Debug)]
pub struct FaultsArgs {
    /// Posterior log directory written by `fit`.
    #[arg(long)]
    log: PathBuf,
    /// Day label after which the change occurs.
    #[arg(long)]
    day: i64,
    #[arg(long)]
    out: PathBuf,
    /// Monte-Carlo draws per mixture Hellinger distance.
    #[arg(long, default_value_t = 1000)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn faults(a: &FaultsArgs) -> Result<()> {
    let log = PosteriorLog::read_dir(&a.log)?;
    let report = fault_report(&log, a.day, a.n_mc, a.seed)?;
    out_dir(&a.out)?;
    let mut m = RunManifest::new("faults", a.seed);
    m.config(&serde_json::json!({ "log": a.log, "day": a.day, "n_mc": a.n_mc }))?;
    if report.no_change_snapshots > 0 {
        m.warn(format!(
            "{} of {} snapshots show no change between the regimes around day {}; their losses are undefined",
            report.no_change_snapshots,
            report.snapshots.len(),
            a.day
        ));
    }
    write_fault_outputs(&a.out, &report, &log)?;
    for f in ["fault_report.json", "fault_losses.csv", "daily_means.csv"] {
        m.output(&a.out.join(f));
    }
    m.extra("ranking_total_effect", &report.ranking_total_effect)?;
    m.write(&a.out)
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Posterior log of a completed fit; the stream is fitted first when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    fpr_target: f64,
    /// Number of simulated datasets to refit.
    #[arg(long, default_value_t = 10)]
    n_cal: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
}

pub fn calibrate(a: &CalibrateArgs) -> Result<()> {
    let cfg = a.chain.resolve()?;
    let ds = ingest(&a.data, &a.spec)?;
    let log = match &a.log {
        Some(dir) => PosteriorLog::read_dir(dir)?,
        None => fit_stream(&ds, &cfg)?,
    };
    let mut m = RunManifest::new("calibrate", cfg.seed);
    m.config(&cfg)?;
    m.warnings
        .push(format!("calibration refits the model {} times and costs about that many fits", a.n_cal));
    let cal = run_calibration(&ds, &log, &cfg, a.n_cal, a.fpr_target, cfg.seed)?;
    out_dir(&a.out)?;
    let path = a.out.join("calibration.json");
    write_json(&path, &cal)?;
    m.output(&path);
    m.extra("n_cal", &cal.n_cal)?;
    m.extra("dataset_seeds", &cal.dataset_seeds)?;
    m.extra("cutoff", &cal.cutoff)?;
    m.write(&a.out)
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated scenario ids; all eight by default.
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<String>>,
    /// Full-scale study: 50 replications of 200 rows per day.
    #[arg(long)]
    long: bool,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    obs_per_day: Option<usize>,
    /// Significance level of the HT2 baseline.
    #[arg(long)]
    ht2_alpha: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    chain: ChainArgs,
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let cfg = a.chain.resolve()?;
    let scenarios = match &a.scenarios {
        Some(ids) => ids.iter().map(|s| s.parse::<Scenario>()).collect::<regimewatch::Result<Vec<_>>>()?,
        None => Scenario::ALL.to_vec(),
    };
    let mut plan = BenchPlan::new(scenarios, cfg.clone(), a.long);
    if let Some(r) = a.replications {
        plan.replications = r;
    }
    if let Some(n) = a.obs_per_day {
        plan.obs_per_day = n;
    }
    if let Some(al) = a.ht2_alpha {
        plan.ht2_alpha = al;
    }
    let mut m = RunManifest::new("bench", cfg.seed);
    m.config(&cfg)?;
    m.extra(
        "plan",
        &serde_json::json!({
            "scenarios": plan.scenarios.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            "replications": plan.replications,
            "obs_per_day": plan.obs_per_day,
            "base_seed": plan.base_seed,
            "ht2_window": plan.ht2_window,
            "ht2_alpha": plan.ht2_alpha,
        }),
    )?;
    let rows = run_bench(&plan)?;
    out_dir(&a.out)?;
    let path = a.out.join("bench_results.csv");
    write_bench_csv(&path, &rows)?;
    m.output(&path);
    m.write(&a.out)
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// CSV with columns `day` and `value` (probability or 0/1 alarm of a change after the day).
    #[arg(long)]
    alarms: PathBuf,
    /// `truth.json` written by `simulate`.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    cutoff: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Deserialize)]
struct AlarmRow {
    day: i64,
    value: f64,
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let mut r = csv::Reader::from_path(&a.alarms).with_context(|| format!("reading {}", a.alarms.display()))?;
    let rows: Vec<AlarmRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    let truth: TruthFile = serde_json::from_str(
        &fs::read_to_string(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?,
    )?;
    let labels: Vec<i64> = rows.iter().map(|x| x.day).collect();
    let values: Vec<f64> = rows.iter().map(|x| x.value).collect();
    let res = score_values(&labels, &values, &truth.change_days, a.cutoff);
    out_dir(&a.out)?;
    let path = a.out.join("score.json");
    write_json(&path, &res)?;
    let mut m = RunManifest::new("score", 0);
    m.config(&serde_json::json!({ "alarms": a.alarms, "truth": a.truth, "cutoff": a.cutoff }))?;
    m.output(&path);
    m.write(&a.out)
}
