mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regimewatch::sampler::{GraphMode, SamplerConfig};

#[derive(Parser, Debug)]
#[command(name = "regimewatch", version, about = "Change-point detection and fault diagnosis for daily-batched data streams")]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a scenario stream with its truth file.
    Simulate(commands::SimulateArgs),
    /// Fit the change-point model to a data stream.
    Fit(commands::FitArgs),
    /// Rank the variables responsible for a change-point.
    Faults(commands::FaultsArgs),
    /// Recommend a cutoff for a target false-positive rate by refitting simulated data.
    Calibrate(commands::CalibrateArgs),
    /// Run the simulation benchmark against the HT2 baseline.
    Bench(commands::BenchArgs),
    /// Score an external per-day alarm file against a truth file.
    Score(commands::ScoreArgs),
}

/// Chain settings shared by the fitting commands; flags override `--config`.
#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    /// TOML sampler configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, value_parser = ["sparse", "full", "decomposable"])]
    graph_mode: Option<String>,
    #[arg(long)]
    snapshot_stride: Option<usize>,
    /// Mixture truncation level.
    #[arg(long)]
    components: Option<usize>,
}

impl ChainArgs {
    pub fn resolve(&self) -> anyhow::Result<SamplerConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("io error on {}: {e}", p.display()))?;
                SamplerConfig::from_toml(&text)?
            }
            None => SamplerConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.iterations {
            cfg.n_iterations = v;
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = Some(v);
        }
        if let Some(v) = self.cutoff {
            cfg.cutoff = v;
        }
        if let Some(v) = &self.graph_mode {
            cfg.graph_mode = v.parse::<GraphMode>()?;
        }
        if let Some(v) = self.snapshot_stride {
            cfg.snapshot_stride = v;
        }
        if let Some(v) = self.components {
            cfg.components = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    use regimewatch::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Io { .. }) => "io",
        Some(E::Csv(_)) => "csv",
        Some(E::Json(_)) => "json",
        Some(E::SpecFormat(_) | E::UnknownColumn(_) | E::MissingDayColumn) => "spec",
        Some(E::InvalidVariable { .. } | E::InvalidValue { .. } | E::NonMonotoneDays { .. }) => "data",
        Some(E::Config(_)) => "config",
        Some(E::NoSnapshots(_)) => "no_snapshots",
        Some(E::Invalid(_)) => "invalid",
        Some(_) => "numerical",
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "error",
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message.replace('\n', " ").trim() });
    eprintln!("{line}");
    ExitCode::from(if kind == "usage" { 2 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", &e.to_string()),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("usage", &e.to_string());
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Faults(a) => commands::faults(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Score(a) => commands::score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(error_kind(&e), &format!("{e:#}")),
    }
}
