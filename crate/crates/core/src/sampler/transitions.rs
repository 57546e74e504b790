use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{beta, ln_gamma, normal};

/// Stay probabilities of the left-to-right regime chain and their Beta hyperparameters.
///
/// Regime `r < R-1` stays with probability `stay[r]`; the last regime is absorbing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub stay: Vec<f64>,
    pub w: f64,
    pub v: f64,
    pub w_shape: f64,
    pub w_rate: f64,
    pub v_shape: f64,
    pub v_rate: f64,
    pub step: f64,
}

impl TransitionModel {
    pub fn n_regimes(&self) -> usize {
        self.stay.len() + 1
    }

    /// Log stay probability of regime `r` (zero for the absorbing last regime).
    pub fn log_stay(&self, r: usize) -> f64 {
        self.stay.get(r).map_or(0.0, |p| p.ln())
    }

    pub fn log_exit(&self, r: usize) -> f64 {
        self.stay.get(r).map_or(f64::NEG_INFINITY, |p| (1.0 - p).ln())
    }
}

/// Stay and exit counts per regime label.
pub fn count_transitions(phi: &[usize], n_regimes: usize) -> (Vec<usize>, Vec<usize>) {
    let mut stays = vec![0; n_regimes];
    let mut exits = vec![0; n_regimes];
    for w in phi.windows(2) {
        if w[1] == w[0] {
            stays[w[0]] += 1;
        } else {
            exits[w[0]] += 1;
        }
    }
    (stays, exits)
}

/// `log p(φ | P)`.
pub fn log_phi_prior(phi: &[usize], tm: &TransitionModel) -> f64 {
    phi.windows(2)
        .map(|w| if w[1] == w[0] { tm.log_stay(w[0]) } else { tm.log_exit(w[0]) })
        .sum()
}

fn log_target(x: f64, shape: f64, rate: f64, other: f64, stay: &[f64], first: bool) -> f64 {
    let (a, b) = if first { (x, other) } else { (other, x) };
    let mut t = (shape - 1.0) * x.ln() - rate * x;
    for &p in stay {
        t += ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln();
    }
    t
}

/// Conjugate Beta update of every stay probability, then random-walk updates of `w` and `v`.
pub fn update_transitions<R: Rng + ?Sized>(rng: &mut R, tm: &mut TransitionModel, phi: &[usize]) {
    let r = tm.n_regimes();
    let (stays, exits) = count_transitions(phi, r);
    for k in 0..tm.stay.len() {
        tm.stay[k] = beta(rng, tm.w + stays[k] as f64, tm.v + exits[k] as f64);
    }
    for first in [true, false] {
        let (cur, other, shape, rate) = if first {
            (tm.w, tm.v, tm.w_shape, tm.w_rate)
        } else {
            (tm.v, tm.w, tm.v_shape, tm.v_rate)
        };
        let prop = cur * (tm.step * normal(rng)).exp();
        let log_a = log_target(prop, shape, rate, other, &tm.stay, first) - log_target(cur, shape, rate, other, &tm.stay, first)
            + (prop / cur).ln();
        if rng.random::<f64>().ln() < log_a {
            if first {
                tm.w = prop;
            } else {
                tm.v = prop;
            }
        }
    }
}
