use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chain::{MoveCounters, PhaseTimings, Sampler};
use super::config::SamplerConfig;
use crate::data::{DataStream, VariableSpec};
use crate::error::{Error, Result};

/// Stored fit of one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSnapshot {
    pub regime: usize,
    pub first_day: i64,
    pub last_day: i64,
    /// Mixture weights of the retained components (weights below 1e-6 dropped, rest renormalized).
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Dense precision matrices, row-major nested.
    pub precisions: Vec<Vec<Vec<f64>>>,
}

/// Parameters of the last two regimes at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub graph_edges: Vec<(usize, usize)>,
    pub regimes: Vec<RegimeSnapshot>,
}

impl Snapshot {
    /// The pair of stored regimes split by a change after day label `day`, if present.
    pub fn around(&self, day: i64) -> Option<(&RegimeSnapshot, &RegimeSnapshot)> {
        self.regimes
            .windows(2)
            .find(|w| w[0].last_day == day)
            .map(|w| (&w[0], &w[1]))
    }
}

/// How many normalizing constants came from each route.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstRouteCounts {
    pub closed_form: usize,
    pub decomposable: usize,
    pub monte_carlo: usize,
    pub laplace: usize,
    #[serde(default)]
    pub mc_fallback: usize,
}

/// Run metadata persisted alongside the traces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub config: SamplerConfig,
    pub timings: PhaseTimings,
    pub counters: MoveCounters,
    pub constants: ConstRouteCounts,
    pub final_graph_edges: Vec<(usize, usize)>,
    pub latent_dim: usize,
    /// Observed per-day means of each variable (missing cells skipped).
    pub daily_means: Vec<Vec<Option<f64>>>,
}

impl ChainMeta {
    pub fn new(data: &DataStream, config: &SamplerConfig) -> Self {
        Self {
            seed: config.seed,
            config: config.clone(),
            daily_means: data.daily_means(),
            ..Default::default()
        }
    }

    pub fn record(&mut self, sampler: &Sampler) {
        use std::sync::atomic::Ordering::Relaxed;
        let c = &sampler.router.counters;
        self.timings = sampler.timings.clone();
        self.counters = sampler.counters.clone();
        self.constants = ConstRouteCounts {
            closed_form: c.closed_form.load(Relaxed),
            decomposable: c.decomposable.load(Relaxed),
            monte_carlo: c.monte_carlo.load(Relaxed),
            laplace: c.laplace.load(Relaxed),
            mc_fallback: c.mc_fallback.load(Relaxed),
        };
        self.final_graph_edges = sampler.state.graph.edges();
        self.latent_dim = sampler.state.dim();
    }
}

/// Everything a chain leaves behind: the regime trace, parameter snapshots and metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorLog {
    pub day_labels: Vec<i64>,
    pub variables: Vec<VariableSpec>,
    pub burn_in: usize,
    /// 0-based regime vector after each iteration.
    pub phi: Vec<Vec<usize>>,
    pub snapshots: Vec<Snapshot>,
    pub meta: ChainMeta,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    day_labels: Vec<i64>,
    variables: Vec<VariableSpec>,
    burn_in: usize,
    n_iterations_run: usize,
    #[serde(flatten)]
    meta: ChainMeta,
}

impl PosteriorLog {
    /// Regime vectors kept after burn-in.
    pub fn post_burn_in(&self) -> &[Vec<usize>] {
        &self.phi[self.burn_in.min(self.phi.len())..]
    }

    /// Fraction of post-burn-in draws with a change directly after each day (last day 0).
    pub fn changepoint_probs(&self) -> Vec<f64> {
        let t = self.day_labels.len();
        let draws = self.post_burn_in();
        let mut out = vec![0.0; t];
        if draws.is_empty() {
            return out;
        }
        for phi in draws {
            for d in 0..t.saturating_sub(1) {
                if phi[d + 1] == phi[d] + 1 {
                    out[d] += 1.0;
                }
            }
        }
        for v in out.iter_mut() {
            *v /= draws.len() as f64;
        }
        out
    }

    /// Day labels whose change-point probability reaches `cutoff`.
    pub fn detected(&self, cutoff: f64) -> Vec<i64> {
        self.changepoint_probs()
            .iter()
            .zip(&self.day_labels)
            .filter(|(p, _)| **p >= cutoff)
            .map(|(_, d)| *d)
            .collect()
    }

    /// Most frequently sampled post-burn-in regime vector.
    pub fn map_phi(&self) -> Option<Vec<usize>> {
        let mut counts: HashMap<&Vec<usize>, usize> = HashMap::new();
        for phi in self.post_burn_in() {
            *counts.entry(phi).or_default() += 1;
        }
        // ties broken by first appearance for determinism
        let best = counts.values().copied().max()?;
        self.post_burn_in().iter().find(|p| counts[p] == best).cloned()
    }

    /// Snapshots whose stored regimes straddle a change after day label `day`.
    pub fn snapshots_around(&self, day: i64) -> Vec<&Snapshot> {
        self.snapshots.iter().filter(|s| s.around(day).is_some()).collect()
    }

    /// Writes `phi_trace.csv`, `snapshots/NNNNNN.json` and `chain_meta.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("snapshots")).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("phi_trace.csv"))?;
        let mut header = vec!["iteration".to_string()];
        header.extend(self.day_labels.iter().map(|d| d.to_string()));
        w.write_record(&header)?;
        for (i, phi) in self.phi.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(phi.iter().map(|r| (r + 1).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("phi_trace.csv"), e))?;
        for s in &self.snapshots {
            let path = dir.join("snapshots").join(format!("{:06}.json", s.iteration));
            fs::write(&path, serde_json::to_string_pretty(s)?).map_err(|e| Error::io(&path, e))?;
        }
        let meta = MetaFile {
            day_labels: self.day_labels.clone(),
            variables: self.variables.clone(),
            burn_in: self.burn_in,
            n_iterations_run: self.phi.len(),
            meta: self.meta.clone(),
        };
        let path = dir.join("chain_meta.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join("chain_meta.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: MetaFile = serde_json::from_str(&text)?;
        let mut r = csv::Reader::from_path(dir.join("phi_trace.csv"))?;
        let mut phi = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(1)
                .map(|v| match v.parse::<usize>() {
                    Ok(x) if x >= 1 => Ok(x - 1),
                    _ => Err(Error::Invalid(format!("bad regime label `{v}` in phi_trace.csv"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != meta.day_labels.len() {
                return Err(Error::Invalid("phi_trace.csv row length differs from day count".into()));
            }
            phi.push(row);
        }
        let snap_dir = dir.join("snapshots");
        let mut files: Vec<_> = match fs::read_dir(&snap_dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect(),
            Err(_) => Vec::new(),
        };
        files.sort();
        let snapshots = files
            .iter()
            .map(|p| {
                let t = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(serde_json::from_str(&t)?)
            })
            .collect::<Result<Vec<Snapshot>>>()?;
        Ok(Self {
            day_labels: meta.day_labels,
            variables: meta.variables,
            burn_in: meta.burn_in,
            phi,
            snapshots,
            meta: meta.meta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> PosteriorLog {
        PosteriorLog {
            day_labels: vec![10, 11, 12, 13],
            variables: vec![VariableSpec::continuous("x")],
            burn_in: 1,
            phi: vec![vec![0, 0, 0, 0], vec![0, 0, 1, 1], vec![0, 0, 1, 1], vec![0, 1, 1, 2]],
            snapshots: vec![Snapshot {
                iteration: 3,
                graph_edges: vec![],
                regimes: vec![
                    RegimeSnapshot {
                        regime: 0,
                        first_day: 10,
                        last_day: 11,
                        weights: vec![1.0],
                        means: vec![vec![0.5]],
                        precisions: vec![vec![vec![2.0]]],
                    },
                    RegimeSnapshot {
                        regime: 1,
                        first_day: 12,
                        last_day: 13,
                        weights: vec![0.25, 0.75],
                        means: vec![vec![1.0], vec![-1.0]],
                        precisions: vec![vec![vec![1.0]], vec![vec![3.0]]],
                    },
                ],
            }],
            meta: ChainMeta::default(),
        }
    }

    #[test]
    fn probabilities_from_post_burn_in_draws() {
        let p = log().changepoint_probs();
        assert_eq!(p.len(), 4);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[2] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p[3], 0.0);
        assert_eq!(log().detected(0.5), vec![11]);
        assert_eq!(log().map_phi().unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn snapshot_around_change() {
        let l = log();
        assert_eq!(l.snapshots_around(11).len(), 1);
        assert!(l.snapshots_around(12).is_empty());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let l = log();
        l.write_dir(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("phi_trace.csv")).unwrap();
        assert!(text.starts_with("iteration,10,11,12,13\n1,1,1,1,1\n"));
        assert!(dir.path().join("snapshots/000003.json").exists());
        assert_eq!(PosteriorLog::read_dir(dir.path()).unwrap(), l);
    }
}
