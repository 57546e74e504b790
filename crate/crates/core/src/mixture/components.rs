use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hyper::{log_marginal_likelihood, ngw_posterior, NgwHyper, SuffStats};
use super::params::{sample_component, RegimeParams};
use crate::dist::{beta, categorical_log, ln_beta};
use crate::error::Result;
use crate::graph::Graph;
use crate::gwishart::NormConstRouter;
use crate::linalg::{log_sum_exp, PrecisionFactor};

/// Component labels of one regime's rows and its stick-breaking fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentState {
    pub gamma: Vec<usize>,
    pub sticks: Vec<f64>,
}

impl ComponentState {
    /// All rows in component 0, sticks drawn from the prior.
    pub fn from_prior<R: Rng + ?Sized>(rng: &mut R, n_rows: usize, q: usize, alpha: f64) -> Self {
        let mut s = Self {
            gamma: vec![0; n_rows],
            sticks: vec![0.0; q],
        };
        s.sticks = draw_sticks(rng, &s.counts(q), alpha);
        s
    }

    pub fn n_components(&self) -> usize {
        self.sticks.len()
    }

    pub fn counts(&self, q: usize) -> Vec<usize> {
        let mut c = vec![0; q];
        for &g in &self.gamma {
            c[g] += 1;
        }
        c
    }

    pub fn weights(&self) -> Vec<f64> {
        stick_weights(&self.sticks)
    }

    pub fn occupied(&self) -> usize {
        self.counts(self.n_components()).iter().filter(|&&c| c > 0).count()
    }
}

/// `π_k = v_k Π_{j<k}(1 - v_j)`, with the truncation remainder folded into the last weight.
pub fn stick_weights(sticks: &[f64]) -> Vec<f64> {
    let q = sticks.len();
    let mut w = Vec::with_capacity(q);
    let mut rest = 1.0;
    for (k, &v) in sticks.iter().enumerate() {
        if k + 1 == q {
            w.push(rest);
        } else {
            w.push(v * rest);
            rest *= 1.0 - v;
        }
    }
    w
}

/// Stick fractions from their Beta full conditionals.
pub fn draw_sticks<R: Rng + ?Sized>(rng: &mut R, counts: &[usize], alpha: f64) -> Vec<f64> {
    let q = counts.len();
    let mut above: usize = counts.iter().sum();
    (0..q)
        .map(|k| {
            above -= counts[k];
            beta(rng, 1.0 + counts[k] as f64, alpha + above as f64)
        })
        .collect()
}

/// `log p(γ | α)` with the sticks integrated out.
pub fn log_stick_collapsed(counts: &[usize], alpha: f64) -> f64 {
    let q = counts.len();
    let mut above: usize = counts.iter().sum();
    let mut total = 0.0;
    for &n_k in counts.iter().take(q.saturating_sub(1)) {
        above -= n_k;
        total += ln_beta(1.0 + n_k as f64, alpha + above as f64) - ln_beta(1.0, alpha);
    }
    total
}

/// Sufficient statistics of each of `q` components over row-major `rows`.
pub fn stats_by_component(rows: &[f64], p: usize, gamma: &[usize], q: usize) -> Vec<SuffStats> {
    let mut out = vec![SuffStats::zero(p); q];
    for (z, &g) in rows.chunks_exact(p).zip(gamma) {
        out[g].push(z);
    }
    out.into_iter().map(SuffStats::finish).collect()
}

/// `Σ_i log N(z_i | μ_{γ_i}, Λ_{γ_i}^{-1})`.
pub fn mixture_loglik(rows: &[f64], p: usize, factors: &[PrecisionFactor], gamma: &[usize]) -> f64 {
    rows.chunks_exact(p)
        .zip(gamma)
        .map(|(z, &g)| factors[g].log_density(z))
        .sum()
}

/// One Gibbs pass over labels followed by a stick update.
pub fn gibbs_components<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut ComponentState,
    factors: &[PrecisionFactor],
    rows: &[f64],
    p: usize,
    alpha: f64,
) {
    let q = state.n_components();
    let logw: Vec<f64> = state.weights().iter().map(|w| w.ln()).collect();
    let mut buf = vec![0.0; q];
    for (z, g) in rows.chunks_exact(p).zip(state.gamma.iter_mut()) {
        for k in 0..q {
            buf[k] = logw[k] + factors[k].log_density(z);
        }
        *g = categorical_log(rng, &buf);
    }
    state.sticks = draw_sticks(rng, &state.counts(q), alpha);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMergeOutcome {
    Split { accepted: bool },
    Merge { accepted: bool },
    /// Split proposed but every component is occupied, or fewer than two rows.
    Skipped,
}

/// Shared inputs of the component split-merge move.
pub struct SplitMergeContext<'a> {
    pub hyper: &'a NgwHyper,
    pub graph: &'a Graph,
    pub router: &'a NormConstRouter,
    pub log_prior_const: f64,
    pub alpha: f64,
    pub n_gibbs: usize,
}

/// Plug-in Gaussian used only to build proposals.
fn plugin(hyper: &NgwHyper, stats: &SuffStats) -> PrecisionFactor {
    let post = ngw_posterior(hyper, stats);
    let cov = &post.d / (post.nu - 2.0);
    let prec = cov.cholesky().map(|c| c.inverse()).unwrap_or_else(|| DMatrix::identity(hyper.dim(), hyper.dim()));
    PrecisionFactor::new(&post.m, &prec).unwrap_or_else(|_| {
        PrecisionFactor::new(&post.m, &DMatrix::identity(hyper.dim(), hyper.dim())).expect("identity is spd")
    })
}

fn stats_of(rows: &[f64], p: usize, idx: &[usize], labels: &[bool], side: bool) -> SuffStats {
    let mut s = SuffStats::zero(p);
    for (&i, &l) in idx.iter().zip(labels) {
        if l == side {
            s.push(&rows[i * p..(i + 1) * p]);
        }
    }
    s.finish()
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Restricted-Gibbs launch state: `true` marks the second group.
fn launch_state<R: Rng + ?Sized>(
    rng: &mut R,
    rows: &[f64],
    p: usize,
    launch: &[usize],
    a: usize,
    b: usize,
    hyper: &NgwHyper,
    n_gibbs: usize,
) -> Vec<bool> {
    let za = &rows[a * p..(a + 1) * p];
    let zb = &rows[b * p..(b + 1) * p];
    let mut lab: Vec<bool> = launch
        .iter()
        .map(|&i| {
            if i == a {
                false
            } else if i == b {
                true
            } else {
                let z = &rows[i * p..(i + 1) * p];
                sqdist(z, zb) < sqdist(z, za)
            }
        })
        .collect();
    for _ in 0..n_gibbs {
        let fa = plugin(hyper, &stats_of(rows, p, launch, &lab, false));
        let fb = plugin(hyper, &stats_of(rows, p, launch, &lab, true));
        let na = lab.iter().filter(|&&l| !l).count() as f64;
        let nb = lab.len() as f64 - na;
        for (j, &i) in launch.iter().enumerate() {
            if i == a || i == b {
                continue;
            }
            let z = &rows[i * p..(i + 1) * p];
            let la = na.ln() + fa.log_density(z);
            let lb = nb.ln() + fb.log_density(z);
            lab[j] = categorical_log(rng, &[la, lb]) == 1;
        }
    }
    lab
}

/// Log probability of `target` under one restricted sweep from `launch_lab`,
/// drawing it when `target` is `None`.
fn final_sweep<R: Rng + ?Sized>(
    rng: &mut R,
    rows: &[f64],
    p: usize,
    launch: &[usize],
    a: usize,
    b: usize,
    launch_lab: &[bool],
    hyper: &NgwHyper,
    target: Option<&[bool]>,
) -> (Vec<bool>, f64) {
    let fa = plugin(hyper, &stats_of(rows, p, launch, launch_lab, false));
    let fb = plugin(hyper, &stats_of(rows, p, launch, launch_lab, true));
    let na = launch_lab.iter().filter(|&&l| !l).count() as f64;
    let nb = launch_lab.len() as f64 - na;
    let mut out = Vec::with_capacity(launch.len());
    let mut logq = 0.0;
    for (j, &i) in launch.iter().enumerate() {
        if i == a {
            out.push(false);
            continue;
        }
        if i == b {
            out.push(true);
            continue;
        }
        let z = &rows[i * p..(i + 1) * p];
        let la = na.ln() + fa.log_density(z);
        let lb = nb.ln() + fb.log_density(z);
        let lse = log_sum_exp(&[la, lb]);
        let side = match target {
            Some(t) => t[j],
            None => categorical_log(rng, &[la, lb]) == 1,
        };
        logq += if side { lb } else { la } - lse;
        out.push(side);
    }
    (out, logq)
}

fn component_stats(rows: &[f64], p: usize, gamma: &[usize], k: usize) -> SuffStats {
    let mut s = SuffStats::zero(p);
    for (z, &g) in rows.chunks_exact(p).zip(gamma) {
        if g == k {
            s.push(z);
        }
    }
    s.finish()
}

/// Split-merge move on the labels of one regime, then a full Gibbs sweep over the moved rows.
///
/// The acceptance ratio integrates out the parameters of the two components involved
/// and the stick fractions; these are redrawn from their conditionals afterwards, so
/// `params` and `state.sticks` are updated in place.
pub fn split_merge_swap_components<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut ComponentState,
    params: &mut RegimeParams,
    rows: &[f64],
    p: usize,
    ctx: &SplitMergeContext<'_>,
) -> Result<SplitMergeOutcome> {
    let n = state.gamma.len();
    let q = state.n_components();
    if n < 2 || q < 2 {
        return Ok(SplitMergeOutcome::Skipped);
    }
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let ca = state.gamma[a];
    let cb = state.gamma[b];
    let counts = state.counts(q);
    let empties: Vec<usize> = (0..q).filter(|&k| counts[k] == 0).collect();
    let launch: Vec<usize> = (0..n).filter(|&i| state.gamma[i] == ca || state.gamma[i] == cb).collect();
    let ml = |s: &SuffStats| log_marginal_likelihood(ctx.hyper, s, ctx.graph, ctx.router, ctx.log_prior_const);

    let (outcome, involved) = if ca == cb {
        if empties.is_empty() {
            return Ok(SplitMergeOutcome::Skipped);
        }
        let cnew = empties[rng.random_range(0..empties.len())];
        let lab0 = launch_state(rng, rows, p, &launch, a, b, ctx.hyper, ctx.n_gibbs);
        let (prop, logq) = final_sweep(rng, rows, p, &launch, a, b, &lab0, ctx.hyper, None);
        let mut gamma_new = state.gamma.clone();
        for (&i, &side) in launch.iter().zip(&prop) {
            gamma_new[i] = if side { cnew } else { ca };
        }
        let s_all = stats_of(rows, p, &launch, &prop, false).add(&stats_of(rows, p, &launch, &prop, true));
        let s_a = stats_of(rows, p, &launch, &prop, false);
        let s_b = stats_of(rows, p, &launch, &prop, true);
        let mut counts_new = counts.clone();
        counts_new[ca] = s_a.n;
        counts_new[cnew] = s_b.n;
        let log_target = ml(&s_a)? + ml(&s_b)? - ml(&s_all)? + log_stick_collapsed(&counts_new, ctx.alpha)
            - log_stick_collapsed(&counts, ctx.alpha);
        let log_alpha = log_target + (empties.len() as f64).ln() - logq;
        let accept = rng.random::<f64>().ln() < log_alpha;
        if accept {
            state.gamma = gamma_new;
        }
        (SplitMergeOutcome::Split { accepted: accept }, [ca, cnew])
    } else {
        let orig: Vec<bool> = launch.iter().map(|&i| state.gamma[i] == cb).collect();
        let lab0 = launch_state(rng, rows, p, &launch, a, b, ctx.hyper, ctx.n_gibbs);
        let (_, logq_rev) = final_sweep(rng, rows, p, &launch, a, b, &lab0, ctx.hyper, Some(&orig));
        let s_a = stats_of(rows, p, &launch, &orig, false);
        let s_b = stats_of(rows, p, &launch, &orig, true);
        let s_all = s_a.add(&s_b);
        let mut counts_new = counts.clone();
        counts_new[ca] = s_all.n;
        counts_new[cb] = 0;
        let log_target = ml(&s_all)? - ml(&s_a)? - ml(&s_b)? + log_stick_collapsed(&counts_new, ctx.alpha)
            - log_stick_collapsed(&counts, ctx.alpha);
        let log_alpha = log_target - ((empties.len() + 1) as f64).ln() + logq_rev;
        let accept = rng.random::<f64>().ln() < log_alpha;
        if accept {
            for &i in &launch {
                state.gamma[i] = ca;
            }
        }
        (SplitMergeOutcome::Merge { accepted: accept }, [ca, cb])
    };

    // Refresh what the acceptance ratio integrated out.
    for &k in &involved {
        let (mu, lam) = sample_component(rng, ctx.hyper, ctx.graph, &component_stats(rows, p, &state.gamma, k))?;
        params.mu[k] = mu;
        params.lambda[k] = lam;
    }
    state.sticks = draw_sticks(rng, &state.counts(q), ctx.alpha);

    // Full Gibbs sweep over the launch rows.
    let factors = params.factors()?;
    let logw: Vec<f64> = state.weights().iter().map(|w| w.ln()).collect();
    let mut buf = vec![0.0; q];
    for &i in &launch {
        let z = &rows[i * p..(i + 1) * p];
        for k in 0..q {
            buf[k] = logw[k] + factors[k].log_density(z);
        }
        state.gamma[i] = categorical_log(rng, &buf);
    }
    Ok(outcome)
}

/// Rows that a split of the component holding both anchors could reassign.
pub fn launch_size(state: &ComponentState, a: usize, b: usize) -> usize {
    let (ca, cb) = (state.gamma[a], state.gamma[b]);
    state.gamma.iter().filter(|&&g| g == ca || g == cb).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use crate::mixture::params::sample_regime_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn stick_identity_and_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rem = 0.0;
        let reps = 2000;
        for _ in 0..reps {
            let s = draw_sticks(&mut rng, &[0; 7], 0.1);
            let w = stick_weights(&s);
            let mut prod = 1.0;
            for k in 0..6 {
                assert!((w[k] - s[k] * prod).abs() < 1e-15);
                prod *= 1.0 - s[k];
            }
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            rem += prod * (1.0 - s[6]);
        }
        assert!(rem / (reps as f64) < 1e-6);
    }

    #[test]
    fn single_component_labels_and_stick() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<f64> = (0..30).map(|i| i as f64 / 10.0).collect();
        let f = vec![PrecisionFactor::new(&DVector::zeros(1), &DMatrix::identity(1, 1)).unwrap()];
        let mut st = ComponentState::from_prior(&mut rng, 30, 1, 0.5);
        let n = 4000;
        let mut sum = 0.0;
        for _ in 0..n {
            gibbs_components(&mut rng, &mut st, &f, &rows, 1, 0.5);
            assert!(st.gamma.iter().all(|&g| g == 0));
            assert_eq!(st.weights(), vec![1.0]);
            sum += st.sticks[0];
        }
        // v_1 ~ Beta(1 + 30, 0.5)
        let mean = 31.0 / 31.5;
        let var = 31.0 * 0.5 / (31.5f64.powi(2) * 32.5);
        assert!((sum / n as f64 - mean).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn separated_clusters_follow_nearest_centre() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let truth: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let rows: Vec<f64> = truth.iter().map(|&t| if t == 0 { -10.0 } else { 10.0 } + nd.sample(&mut rng)).collect();
        let q = 7;
        let mut factors = Vec::new();
        for k in 0..q {
            let m = match k {
                0 => -10.0,
                1 => 10.0,
                _ => 40.0 + k as f64,
            };
            factors.push(PrecisionFactor::new(&DVector::from_element(1, m), &DMatrix::identity(1, 1)).unwrap());
        }
        let mut st = ComponentState::from_prior(&mut rng, 400, q, 0.1);
        st.sticks = vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0];
        for _ in 0..10 {
            gibbs_components(&mut rng, &mut st, &factors, &rows, 1, 0.1);
        }
        let agree = st.gamma.iter().zip(&truth).filter(|(g, t)| *g == *t).count();
        assert!(agree as f64 >= 0.99 * 400.0);
    }

    #[test]
    fn mixture_loglik_examples() {
        let f = vec![PrecisionFactor::new(&DVector::from_vec(vec![1.0, 2.0]), &DMatrix::identity(2, 2)).unwrap()];
        let v = mixture_loglik(&[1.0, 2.0], 2, &f, &[0]);
        assert!((v + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        let one = mixture_loglik(&[0.0, 0.0], 2, &f, &[0]);
        let two = mixture_loglik(&[0.0, 0.0, 0.0, 0.0], 2, &f, &[0, 0]);
        assert!((two - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn collapsed_stick_matches_beta_integral() {
        // Q = 2: p(γ) = B(1 + n_0, α + n_1) / B(1, α)
        let v = log_stick_collapsed(&[3, 2], 0.7);
        assert!((v - (ln_beta(4.0, 2.7) - ln_beta(1.0, 0.7))).abs() < 1e-13);
    }

    #[test]
    fn minimal_split_has_two_rows() {
        let st = ComponentState {
            gamma: vec![0, 1, 1, 0],
            sticks: vec![0.5; 3],
        };
        assert_eq!(launch_size(&st, 1, 2), 2);
    }

    fn hyper1(rows: &[f64]) -> NgwHyper {
        let s = SuffStats::from_rows(rows, 1);
        let var = s.scatter()[(0, 0)] / s.n as f64;
        NgwHyper {
            m: s.mean(),
            lambda: 1.0,
            d: DMatrix::from_element(1, 1, 2.0 * var),
            nu: 4.0,
            c: 1.0,
            d_rate: 1.0,
            m0: s.mean(),
        }
    }

    fn recovers(seed: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let rows: Vec<f64> = (0..200).map(|i| if i < 100 { -5.0 } else { 5.0 } + nd.sample(&mut rng)).collect();
        let h = hyper1(&rows);
        let g = Graph::full(1);
        let router = NormConstRouter::new(true, 0);
        let prior_const = router.prior(&mut rng, &g, &h.d, h.nu).unwrap();
        let q = 7;
        let alpha = 0.1;
        let mut st = ComponentState::from_prior(&mut rng, 200, q, alpha);
        let ctx = SplitMergeContext { hyper: &h, graph: &g, router: &router, log_prior_const: prior_const, alpha, n_gibbs: 5 };
        for _ in 0..50 {
            let stats: Vec<SuffStats> = (0..q).map(|k| component_stats(&rows, 1, &st.gamma, k)).collect();
            let mut params = sample_regime_params(&mut rng, &h, &g, &stats).unwrap();
            split_merge_swap_components(&mut rng, &mut st, &mut params, &rows, 1, &ctx).unwrap();
            gibbs_components(&mut rng, &mut st, &params.factors().unwrap(), &rows, 1, alpha);
            let c = st.counts(q);
            if c.iter().filter(|&&n| n >= 10).count() == 2 && c.iter().filter(|&&n| n > 0).count() == 2 {
                return true;
            }
        }
        false
    }

    #[test]
    fn split_merge_recovers_two_components() {
        let ok = (0..10).filter(|&s| recovers(100 + s)).count();
        assert!(ok >= 9, "recovered in {ok}/10 runs");
    }
}
