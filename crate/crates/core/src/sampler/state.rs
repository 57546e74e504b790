use std::collections::HashMap;
use std::ops::Range;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use super::config::{GraphMode, SamplerConfig};
use super::transitions::TransitionModel;
use crate::data::LatentMatrix;
use crate::dist::beta;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gwishart::NormConstRouter;
use crate::mixture::{draw_sticks, sample_regime_params, stats_by_component, NgwHyper, RegimeParams, SuffStats};
use crate::rng::{Purpose, Streams};

/// Everything the chain updates.
///
/// `params` and `sticks` hold one slot per possible regime; slots beyond the last
/// occupied regime carry prior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub latent: LatentMatrix,
    /// 0-based regime label per day.
    pub phi: Vec<usize>,
    /// Component label per latent row.
    pub gamma: Vec<usize>,
    pub sticks: Vec<Vec<f64>>,
    pub params: Vec<RegimeParams>,
    pub graph: Graph,
    pub hyper: NgwHyper,
    pub transitions: TransitionModel,
    pub iteration: usize,
}

/// Day ranges `(first, last)` of each regime of a monotone label sequence.
pub fn regime_bounds(phi: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (t, &r) in phi.iter().enumerate() {
        if r == out.len() {
            out.push((t, t));
        } else {
            out[r].1 = t;
        }
    }
    out
}

impl SamplerState {
    pub fn n_regimes(&self) -> usize {
        self.phi.last().map_or(0, |r| r + 1)
    }

    pub fn dim(&self) -> usize {
        self.latent.dim()
    }

    pub fn n_components(&self) -> usize {
        self.sticks[0].len()
    }

    pub fn regime_rows(&self, first: usize, last: usize) -> Range<usize> {
        self.latent.rows_of_days(first, last)
    }

    /// Per-component statistics of the rows in days `first..=last`.
    pub fn component_stats(&self, first: usize, last: usize) -> Vec<SuffStats> {
        let rows = self.regime_rows(first, last);
        stats_by_component(
            self.latent.rows_slice(rows.clone()),
            self.dim(),
            &self.gamma[rows],
            self.n_components(),
        )
    }

    /// Statistics of each day in `first..=last`, components ignored.
    pub fn day_stats(&self, first: usize, last: usize) -> Vec<SuffStats> {
        (first..=last)
            .map(|t| SuffStats::from_rows(self.latent.rows_slice(self.latent.rows_of_days(t, t)), self.dim()))
            .collect()
    }

    /// Checks the structural invariants tying labels, slots and data together.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invalid(m));
        if self.phi.first() != Some(&0) {
            return fail("first day must be in regime 0".into());
        }
        for w in self.phi.windows(2) {
            if w[1] != w[0] && w[1] != w[0] + 1 {
                return fail(format!("regime labels jump from {} to {}", w[0], w[1]));
            }
        }
        let r = self.params.len();
        if self.n_regimes() > r || self.sticks.len() != r || self.transitions.n_regimes() != r {
            return fail("regime count exceeds the slot count".into());
        }
        if self.gamma.len() != self.latent.n_rows() {
            return fail("component labels do not cover every row".into());
        }
        let q = self.n_components();
        if self.gamma.iter().any(|&g| g >= q) {
            return fail("component label out of range".into());
        }
        if self.latent.values.iter().any(|v| !v.is_finite()) {
            return fail("non-finite latent value".into());
        }
        if self.transitions.stay.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return fail("stay probability outside (0, 1)".into());
        }
        Ok(())
    }
}

/// Memoized `log I_G(ν, D)` for the fixed prior scale, keyed by graph.
///
/// Monte-Carlo values use a stream derived from the graph alone, so a graph always
/// maps to the same estimate within a chain.
#[derive(Debug)]
pub struct PriorConstCache {
    streams: Streams,
    map: Mutex<HashMap<Graph, f64>>,
}

impl PriorConstCache {
    pub fn new(streams: Streams) -> Self {
        Self {
            streams,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, router: &NormConstRouter, graph: &Graph, d: &DMatrix<f64>, nu: f64) -> Result<f64> {
        if let Some(v) = self.map.lock().unwrap().get(graph) {
            return Ok(*v);
        }
        let key = graph.edges().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &(i, j)| {
            (h ^ ((i as u64) << 32 | j as u64)).wrapping_mul(0x0100_0000_01b3)
        });
        let mut rng = self.streams.stream(0, Purpose::NormConst, key);
        let v = router.prior(&mut rng, graph, d, nu)?;
        self.map.lock().unwrap().insert(graph.clone(), v);
        Ok(v)
    }
}

/// Initial chain state: one regime, one occupied component, empirical NG-W scale.
pub fn initial_state(latent: LatentMatrix, config: &SamplerConfig, streams: &Streams) -> Result<SamplerState> {
    let p = latent.dim();
    let n_days = latent.n_days();
    let n = latent.n_rows();
    if p == 0 || n == 0 {
        return Err(Error::Invalid("no latent data to fit".into()));
    }
    let r = config.max_regimes(n_days);
    let q = config.components;
    let nu = config.nu.unwrap_or(3.0 + p as f64);
    let all = SuffStats::from_rows(&latent.values, p);
    let empirical_mean = all.mean();
    let m0 = match &config.mean_prior_center {
        Some(c) if c.len() == p => DVector::from_column_slice(c),
        Some(c) => {
            return Err(Error::Config(format!(
                "mean_prior_center has {} entries, latent dimension is {p}",
                c.len()
            )))
        }
        None => empirical_mean,
    };
    let mut cov = all.scatter() / n as f64;
    let keep = 1.0 - config.d_shrinkage;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                cov[(i, j)] *= keep;
            }
        }
    }
    let ridge = (cov.trace() / p as f64).max(1.0) * 1e-6;
    for k in 0..p {
        cov[(k, k)] += ridge;
    }
    let hyper = NgwHyper {
        m: m0.clone(),
        lambda: config.lambda_init,
        d: cov * (nu - 2.0),
        nu,
        c: config.lambda_shape,
        d_rate: config.lambda_rate,
        m0,
    };
    let graph = match config.graph_mode {
        GraphMode::Full => Graph::full(p),
        _ => Graph::empty(p),
    };
    let mut rng = streams.stream(0, Purpose::Init, 0);
    let (w, v) = (1.0, 1.0);
    let transitions = TransitionModel {
        stay: (0..r.saturating_sub(1)).map(|_| beta(&mut rng, w, v)).collect(),
        w,
        v,
        w_shape: config.w_shape,
        w_rate: config.w_rate,
        v_shape: config.v_shape,
        v_rate: config.v_rate,
        step: config.wv_step,
    };
    let gamma = vec![0; n];
    let mut sticks = Vec::with_capacity(r);
    let mut params = Vec::with_capacity(r);
    let empty = vec![SuffStats::zero(p); q];
    for slot in 0..r {
        let mut counts = vec![0; q];
        let stats = if slot == 0 {
            counts[0] = n;
            let mut s = empty.clone();
            s[0] = all.clone();
            s
        } else {
            empty.clone()
        };
        sticks.push(draw_sticks(&mut rng, &counts, config.alpha));
        params.push(sample_regime_params(&mut rng, &hyper, &graph, &stats)?);
    }
    Ok(SamplerState {
        phi: vec![0; n_days],
        latent,
        gamma,
        sticks,
        params,
        graph,
        hyper,
        transitions,
        iteration: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_of_labels() {
        assert_eq!(regime_bounds(&[0, 0, 1, 1, 1, 2]), vec![(0, 1), (2, 4), (5, 5)]);
        assert_eq!(regime_bounds(&[0]), vec![(0, 0)]);
    }
}
