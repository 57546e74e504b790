use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{GraphMode, SamplerConfig};
use super::drj::{drj_step, DrjComponent, DrjOutcome};
use super::hyper_update::update_mean_hyper;
use super::latent_draw::{draw_latent, shift_nominal_blocks};
use super::log::{ChainMeta, PosteriorLog, RegimeSnapshot, Snapshot};
use super::phi_moves::{split_merge_phi, swap_phi, PhiContext, PhiMove};
use super::state::{initial_state, regime_bounds, PriorConstCache, SamplerState};
use super::transitions::update_transitions;
use crate::data::{init_latent, DataStream, LatentMatrix};
use crate::dist::normal;
use crate::error::{Error, Result};
use crate::gwishart::NormConstRouter;
use crate::linalg::{chol_upper, mvn_from_precision_chol};
use crate::mixture::{
    draw_sticks, gibbs_components, ngw_posterior, sample_component, sample_regime_params, split_merge_swap_components,
    stick_weights, ComponentState, RegimeParams, SplitMergeContext, SplitMergeOutcome, SuffStats,
};
use crate::rng::{Purpose, Streams};

/// Proposal and acceptance tallies of the Metropolis-Hastings moves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveCounters {
    pub phi_split_proposed: usize,
    pub phi_split_accepted: usize,
    pub phi_merge_proposed: usize,
    pub phi_merge_accepted: usize,
    pub days_swapped: usize,
    pub component_split_proposed: usize,
    pub component_split_accepted: usize,
    pub component_merge_proposed: usize,
    pub component_merge_accepted: usize,
    pub graph_proposed: usize,
    pub graph_accepted: usize,
    pub graph_outside: usize,
}

/// Wall-clock seconds spent in each sub-step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub latent: f64,
    pub components: f64,
    pub transitions: f64,
    pub mean_hyper: f64,
    pub split_merge: f64,
    pub swap: f64,
    pub theta: f64,
    pub graph: f64,
    pub total: f64,
}

/// A chain: its state plus the fixed context shared by every sweep.
pub struct Sampler {
    pub config: SamplerConfig,
    pub streams: Streams,
    pub router: NormConstRouter,
    pub prior_consts: PriorConstCache,
    pub state: SamplerState,
    pub counters: MoveCounters,
    pub timings: PhaseTimings,
    /// Holds the regime vector fixed (no split, merge or swap moves).
    pub fix_phi: bool,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

impl Sampler {
    pub fn new(latent: LatentMatrix, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        let streams = Streams::new(config.seed);
        let state = initial_state(latent, &config, &streams)?;
        Ok(Self {
            router: NormConstRouter::new(!config.force_general_constants, config.n_mc),
            prior_consts: PriorConstCache::new(streams),
            streams,
            config,
            state,
            counters: MoveCounters::default(),
            timings: PhaseTimings::default(),
            fix_phi: false,
        })
    }

    fn log_prior_const(&self) -> Result<f64> {
        let s = &self.state;
        self.prior_consts.get(&self.router, &s.graph, &s.hyper.d, s.hyper.nu)
    }

    /// One full sweep over every unknown, in the fixed sub-step order.
    pub fn sweep(&mut self) -> Result<()> {
        let start = Instant::now();
        self.state.iteration += 1;
        let it = self.state.iteration as u64;
        let mut t = std::mem::take(&mut self.timings);

        timed(&mut t.latent, || -> Result<()> {
            let s = &mut self.state;
            draw_latent(&mut s.latent, &s.phi, &s.gamma, &s.params, &self.streams, it)?;
            let mut rng = self.streams.stream(it, Purpose::NominalShift, 0);
            let bounds = regime_bounds(&s.phi);
            shift_nominal_blocks(&mut rng, &mut s.latent, &bounds, &mut s.params, &s.hyper.m, s.hyper.lambda);
            Ok(())
        })?;
        timed(&mut t.components, || self.update_components(it))?;
        timed(&mut t.transitions, || {
            let mut rng = self.streams.stream(it, Purpose::Transitions, 0);
            update_transitions(&mut rng, &mut self.state.transitions, &self.state.phi);
        });
        timed(&mut t.mean_hyper, || {
            let mut rng = self.streams.stream(it, Purpose::MeanHyper, 0);
            update_mean_hyper(&mut rng, &mut self.state.hyper, &self.state.params)
        })?;
        let fix_phi = self.fix_phi;
        timed(&mut t.split_merge, || -> Result<()> {
            if fix_phi {
                return Ok(());
            }
            let ctx = PhiContext {
                router: &self.router,
                log_prior_const: self.log_prior_const()?,
                alpha: self.config.alpha,
                streams: &self.streams,
                iteration: it,
            };
            match split_merge_phi(&mut self.state, &ctx)? {
                PhiMove::Split { accepted } => {
                    self.counters.phi_split_proposed += 1;
                    self.counters.phi_split_accepted += accepted as usize;
                }
                PhiMove::Merge { accepted } => {
                    self.counters.phi_merge_proposed += 1;
                    self.counters.phi_merge_accepted += accepted as usize;
                }
                PhiMove::NoOp => {}
            }
            Ok(())
        })?;
        let swapped = match fix_phi {
            true => 0,
            false => timed(&mut t.swap, || swap_phi(&mut self.state, &self.streams, it))?,
        };
        self.counters.days_swapped += swapped;
        timed(&mut t.theta, || self.update_theta(it))?;
        timed(&mut t.graph, || self.update_graph(it))?;
        t.total += start.elapsed().as_secs_f64();
        self.timings = t;
        Ok(())
    }

    fn update_components(&mut self, it: u64) -> Result<()> {
        let lpc = self.log_prior_const()?;
        let s = &self.state;
        let p = s.dim();
        let q = s.n_components();
        let alpha = self.config.alpha;
        let bounds = regime_bounds(&s.phi);
        let ctx = SplitMergeContext {
            hyper: &s.hyper,
            graph: &s.graph,
            router: &self.router,
            log_prior_const: lpc,
            alpha,
            n_gibbs: self.config.launch_sweeps,
        };
        let streams = &self.streams;
        type Updated = (ComponentState, RegimeParams, Option<SplitMergeOutcome>);
        let updated: Vec<Updated> = bounds
            .par_iter()
            .enumerate()
            .map(|(r, &(f, l))| -> Result<Updated> {
                let mut rng = streams.stream(it, Purpose::Components, r as u64);
                let rows_range = s.regime_rows(f, l);
                let rows = s.latent.rows_slice(rows_range.clone());
                let mut cs = ComponentState {
                    gamma: s.gamma[rows_range].to_vec(),
                    sticks: s.sticks[r].clone(),
                };
                let mut params = s.params[r].clone();
                if q == 1 {
                    cs.sticks = draw_sticks(&mut rng, &cs.counts(q), alpha);
                    return Ok((cs, params, None));
                }
                let outcome = split_merge_swap_components(&mut rng, &mut cs, &mut params, rows, p, &ctx)?;
                let factors = params.factors()?;
                gibbs_components(&mut rng, &mut cs, &factors, rows, p, alpha);
                Ok((cs, params, Some(outcome)))
            })
            .collect::<Result<_>>()?;
        let n_occ = bounds.len();
        for (r, ((cs, params, outcome), &(f, l))) in updated.into_iter().zip(&bounds).enumerate() {
            let rows = self.state.regime_rows(f, l);
            self.state.gamma[rows].copy_from_slice(&cs.gamma);
            self.state.sticks[r] = cs.sticks;
            self.state.params[r] = params;
            match outcome {
                Some(SplitMergeOutcome::Split { accepted }) => {
                    self.counters.component_split_proposed += 1;
                    self.counters.component_split_accepted += accepted as usize;
                }
                Some(SplitMergeOutcome::Merge { accepted }) => {
                    self.counters.component_merge_proposed += 1;
                    self.counters.component_merge_accepted += accepted as usize;
                }
                _ => {}
            }
        }
        let n_slots = self.state.sticks.len();
        for r in n_occ..n_slots {
            let mut rng = self.streams.stream(it, Purpose::Components, r as u64);
            self.state.sticks[r] = draw_sticks(&mut rng, &vec![0; q], alpha);
        }
        Ok(())
    }

    fn update_theta(&mut self, it: u64) -> Result<()> {
        let s = &self.state;
        let bounds = regime_bounds(&s.phi);
        let empty = vec![SuffStats::zero(s.dim()); s.n_components()];
        let streams = &self.streams;
        let params: Vec<RegimeParams> = (0..s.params.len())
            .into_par_iter()
            .map(|r| {
                let mut rng = streams.stream(it, Purpose::Theta, r as u64);
                let stats = match bounds.get(r) {
                    Some(&(f, l)) => s.component_stats(f, l),
                    None => empty.clone(),
                };
                sample_regime_params(&mut rng, &s.hyper, &s.graph, &stats)
            })
            .collect::<Result<_>>()?;
        self.state.params = params;
        Ok(())
    }

    fn update_graph(&mut self, it: u64) -> Result<()> {
        if self.config.graph_mode == GraphMode::Full || self.state.dim() < 2 {
            return Ok(());
        }
        let n_moves = self.config.graph_moves.unwrap_or(self.state.dim());
        let bounds = regime_bounds(&self.state.phi);
        let q = self.state.n_components();
        let mut slots = Vec::new();
        let mut comps = Vec::new();
        for (r, &(f, l)) in bounds.iter().enumerate() {
            for (k, st) in self.state.component_stats(f, l).into_iter().enumerate() {
                if st.n > 0 {
                    slots.push((r, k, st.clone()));
                    comps.push(DrjComponent {
                        lambda: self.state.params[r].lambda[k].clone(),
                        d_post: ngw_posterior(&self.state.hyper, &st).d,
                    });
                }
            }
        }
        let mut any = false;
        for mv in 0..n_moves as u64 {
            let base = mv << 20;
            let mut rng = self.streams.stream(it, Purpose::Graph, base);
            let rngs = (0..comps.len())
                .map(|c| self.streams.stream(it, Purpose::Graph, base + 1 + c as u64))
                .collect();
            let s = &self.state;
            let outcome = drj_step(
                &mut rng,
                rngs,
                &s.graph,
                &comps,
                &s.hyper.d,
                s.hyper.nu,
                self.config.rho,
                self.config.sigma_g,
                self.config.graph_mode,
            );
            self.counters.graph_proposed += 1;
            match outcome {
                Ok(DrjOutcome::Accepted { graph, lambdas }) => {
                    self.counters.graph_accepted += 1;
                    self.state.graph = graph;
                    for (c, lam) in comps.iter_mut().zip(lambdas) {
                        c.lambda = lam;
                    }
                    any = true;
                }
                Ok(DrjOutcome::Outside) => self.counters.graph_outside += 1,
                // a numerically failed proposal is treated as rejected
                Ok(DrjOutcome::Rejected) | Err(_) => {}
            }
        }
        if !any {
            return Ok(());
        }
        let mut occupied = vec![vec![None; q]; self.state.params.len()];
        for ((r, k, st), c) in slots.into_iter().zip(comps) {
            occupied[r][k] = Some((st, c.lambda));
        }
        let s = &self.state;
        let streams = &self.streams;
        let p = s.dim();
        let refreshed: Vec<RegimeParams> = occupied
            .into_par_iter()
            .enumerate()
            .map(|(r, comps)| -> Result<RegimeParams> {
                let mut rng = streams.stream(it, Purpose::Graph, (1u64 << 40) + r as u64);
                let mut out = RegimeParams {
                    mu: Vec::with_capacity(q),
                    lambda: Vec::with_capacity(q),
                };
                for slot in comps {
                    let (mu, lam) = match slot {
                        Some((st, lam)) => {
                            let post = ngw_posterior(&s.hyper, &st);
                            let psi = chol_upper(&(&lam * post.lambda))?;
                            let eps = DVector::from_fn(p, |_, _| normal(&mut rng));
                            (mvn_from_precision_chol(&post.m, &psi, eps), lam)
                        }
                        None => sample_component(&mut rng, &s.hyper, &s.graph, &SuffStats::zero(p))?,
                    };
                    out.mu.push(mu);
                    out.lambda.push(lam);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        self.state.params = refreshed;
        Ok(())
    }

    /// Parameter record of the last two regimes.
    pub fn snapshot(&self, day_labels: &[i64]) -> Snapshot {
        let s = &self.state;
        let bounds = regime_bounds(&s.phi);
        let from = bounds.len().saturating_sub(2);
        let regimes = (from..bounds.len())
            .map(|r| {
                let (f, l) = bounds[r];
                let w = stick_weights(&s.sticks[r]);
                let keep: Vec<usize> = (0..w.len()).filter(|&k| w[k] >= 1e-6).collect();
                let total: f64 = keep.iter().map(|&k| w[k]).sum();
                RegimeSnapshot {
                    regime: r,
                    first_day: day_labels[f],
                    last_day: day_labels[l],
                    weights: keep.iter().map(|&k| w[k] / total).collect(),
                    means: keep.iter().map(|&k| s.params[r].mu[k].iter().copied().collect()).collect(),
                    precisions: keep
                        .iter()
                        .map(|&k| {
                            let m = &s.params[r].lambda[k];
                            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
                        })
                        .collect(),
                }
            })
            .collect();
        Snapshot {
            iteration: s.iteration,
            graph_edges: s.graph.edges(),
            regimes,
        }
    }
}

/// Runs burn-in and sampling sweeps on a data stream and collects the posterior log.
pub fn run_chain(data: &DataStream, config: &SamplerConfig) -> Result<PosteriorLog> {
    if data.n_days() < 2 {
        return Err(Error::Invalid("at least two days of data are required".into()));
    }
    let day_labels: Vec<i64> = data.days.iter().map(|d| d.day).collect();
    let mut meta = ChainMeta::new(data, config);
    let mut log = PosteriorLog {
        day_labels: day_labels.clone(),
        variables: data.variables.clone(),
        burn_in: config.burn_in(),
        phi: Vec::new(),
        snapshots: Vec::new(),
        meta: ChainMeta::default(),
    };
    if config.n_iterations == 0 {
        config.validate()?;
        log.meta = meta;
        return Ok(log);
    }
    let mut sampler = Sampler::new(init_latent(data), config.clone())?;
    let burn = config.burn_in();
    for it in 1..=config.n_iterations {
        sampler.sweep()?;
        log.phi.push(sampler.state.phi.clone());
        if it > burn && (it - burn) % config.snapshot_stride == 0 {
            log.snapshots.push(sampler.snapshot(&day_labels));
        }
        log::debug!("iteration {it}: {} regimes, {} edges", sampler.state.n_regimes(), sampler.state.graph.edge_count());
    }
    meta.record(&sampler);
    log.meta = meta;
    Ok(log)
}
