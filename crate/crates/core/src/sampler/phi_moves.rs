use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split_point::split_point_distribution;
use super::state::{regime_bounds, SamplerState};
use super::transitions::{log_phi_prior, TransitionModel};
use crate::dist::{categorical, categorical_log};
use crate::error::Result;
use crate::gwishart::NormConstRouter;
use crate::linalg::log_sum_exp;
use crate::mixture::{draw_sticks, log_marginal_likelihood, log_stick_collapsed, sample_regime_params, SuffStats};
use crate::rng::{Purpose, Streams};

/// Shared inputs of the regime-vector moves.
pub struct PhiContext<'a> {
    pub router: &'a NormConstRouter,
    /// `log I_G(ν, D)` for the current graph.
    pub log_prior_const: f64,
    pub alpha: f64,
    pub streams: &'a Streams,
    pub iteration: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhiMove {
    Split { accepted: bool },
    Merge { accepted: bool },
    /// The chosen regime spans a single day, or only one regime is allowed.
    NoOp,
}

/// Probability of proposing a split when `m` of `r_max` regimes are in use.
pub fn split_probability(m: usize, r_max: usize) -> f64 {
    if r_max <= 1 || m >= r_max {
        0.0
    } else if m == 1 {
        1.0
    } else {
        0.5
    }
}

/// Log target of one regime with its parameters and stick fractions integrated out.
fn regime_log_target(state: &SamplerState, first: usize, last: usize, ctx: &PhiContext<'_>) -> Result<f64> {
    let stats = state.component_stats(first, last);
    let counts: Vec<usize> = stats.iter().map(|s| s.n).collect();
    let mut total = log_stick_collapsed(&counts, ctx.alpha);
    for s in &stats {
        total += log_marginal_likelihood(&state.hyper, s, &state.graph, ctx.router, ctx.log_prior_const)?;
    }
    Ok(total)
}

/// `𝒫★` for days `first..=last`, drawn from a stream fixed by the range so that a
/// split and its reverse merge evaluate the same distribution.
pub fn split_distribution_for(state: &SamplerState, first: usize, last: usize, ctx: &PhiContext<'_>) -> Result<Vec<f64>> {
    let t = state.phi.len() as u64;
    let mut rng = ctx
        .streams
        .stream(ctx.iteration, Purpose::SplitMerge, 3 + first as u64 * t + last as u64);
    split_point_distribution(&mut rng, &state.day_stats(first, last), &state.hyper, &state.graph)
}

/// Redraws the parameters and sticks of the regime occupying days `first..=last` into `slot`.
fn redraw_regime<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut SamplerState,
    slot: usize,
    first: usize,
    last: usize,
    alpha: f64,
) -> Result<()> {
    let stats = state.component_stats(first, last);
    let counts: Vec<usize> = stats.iter().map(|s| s.n).collect();
    state.params[slot] = sample_regime_params(rng, &state.hyper, &state.graph, &stats)?;
    state.sticks[slot] = draw_sticks(rng, &counts, alpha);
    Ok(())
}

fn shift_after(phi: &mut [usize], from: usize, up: bool) {
    for r in phi[from..].iter_mut() {
        if up {
            *r += 1;
        } else {
            *r -= 1;
        }
    }
}

/// One split or merge proposal on the regime vector.
///
/// The regimes involved have their parameters and sticks integrated out of the
/// acceptance ratio and redrawn afterwards whatever the outcome; component labels
/// are carried over unchanged.
pub fn split_merge_phi(state: &mut SamplerState, ctx: &PhiContext<'_>) -> Result<PhiMove> {
    let mut rng = ctx.streams.stream(ctx.iteration, Purpose::SplitMerge, 0);
    let mut redraw_rng = ctx.streams.stream(ctx.iteration, Purpose::SplitMerge, 1);
    let r_max = state.params.len();
    let bounds = regime_bounds(&state.phi);
    let m = bounds.len();
    if r_max <= 1 {
        return Ok(PhiMove::NoOp);
    }
    let ps = |k: usize| split_probability(k, r_max);
    let old_prior = log_phi_prior(&state.phi, &state.transitions);
    if rng.random::<f64>() < ps(m) {
        let t = rng.random_range(0..m);
        let (f, l) = bounds[t];
        if f == l {
            return Ok(PhiMove::NoOp);
        }
        let probs = split_distribution_for(state, f, l, ctx)?;
        let s = categorical(&mut rng, &probs) + 1;
        let mut phi_new = state.phi.clone();
        shift_after(&mut phi_new, f + s, true);
        let log_old = regime_log_target(state, f, l, ctx)?;
        let log_new = regime_log_target(state, f, f + s - 1, ctx)? + regime_log_target(state, f + s, l, ctx)?;
        let log_fwd = ps(m).ln() - (m as f64).ln() + probs[s - 1].ln();
        let log_rev = (1.0 - ps(m + 1)).ln() - (m as f64).ln();
        let log_a = log_new - log_old + log_phi_prior(&phi_new, &state.transitions) - old_prior + log_rev - log_fwd;
        let accepted = rng.random::<f64>().ln() < log_a;
        if accepted {
            state.phi = phi_new;
            let placeholder = state.params[t].clone();
            state.params.insert(t + 1, placeholder);
            state.params.pop();
            let sticks = state.sticks[t].clone();
            state.sticks.insert(t + 1, sticks);
            state.sticks.pop();
            redraw_regime(&mut redraw_rng, state, t, f, f + s - 1, ctx.alpha)?;
            redraw_regime(&mut redraw_rng, state, t + 1, f + s, l, ctx.alpha)?;
        } else {
            redraw_regime(&mut redraw_rng, state, t, f, l, ctx.alpha)?;
        }
        Ok(PhiMove::Split { accepted })
    } else {
        let t = rng.random_range(0..m - 1);
        let (f, mid) = bounds[t];
        let l = bounds[t + 1].1;
        let s = mid - f + 1;
        let probs = split_distribution_for(state, f, l, ctx)?;
        let mut phi_new = state.phi.clone();
        shift_after(&mut phi_new, f + s, false);
        let log_old = regime_log_target(state, f, mid, ctx)? + regime_log_target(state, mid + 1, l, ctx)?;
        let log_new = regime_log_target(state, f, l, ctx)?;
        let log_fwd = (1.0 - ps(m)).ln() - ((m - 1) as f64).ln();
        let log_rev = ps(m - 1).ln() - ((m - 1) as f64).ln() + probs[s - 1].ln();
        let log_a = log_new - log_old + log_phi_prior(&phi_new, &state.transitions) - old_prior + log_rev - log_fwd;
        let accepted = rng.random::<f64>().ln() < log_a;
        if accepted {
            state.phi = phi_new;
            state.params.remove(t + 1);
            state.sticks.remove(t + 1);
            let q = state.n_components();
            let p = state.dim();
            let fresh = sample_regime_params(&mut redraw_rng, &state.hyper, &state.graph, &vec![SuffStats::zero(p); q])?;
            state.params.push(fresh);
            state.sticks.push(draw_sticks(&mut redraw_rng, &vec![0; q], ctx.alpha));
            redraw_regime(&mut redraw_rng, state, t, f, l, ctx.alpha)?;
        } else {
            redraw_regime(&mut redraw_rng, state, t, f, mid, ctx.alpha)?;
            redraw_regime(&mut redraw_rng, state, t + 1, mid + 1, l, ctx.alpha)?;
        }
        Ok(PhiMove::Merge { accepted })
    }
}

fn log_transition(tm: &TransitionModel, from: usize, to: usize) -> f64 {
    if from == to {
        tm.log_stay(from)
    } else {
        tm.log_exit(from)
    }
}

/// Reassigns each boundary day between its two neighbouring regimes.
///
/// Only days whose neighbours lie in consecutive regimes move, so no regime is created
/// or emptied. The component labels of the day's rows are integrated out of the choice
/// and redrawn under the chosen regime. Returns the number of days that changed regime.
pub fn swap_phi(state: &mut SamplerState, streams: &Streams, iteration: u64) -> Result<usize> {
    let n_days = state.phi.len();
    if n_days < 3 {
        return Ok(0);
    }
    let m = state.n_regimes();
    let q = state.n_components();
    let factors = state.params[..m].iter().map(|rp| rp.factors()).collect::<Result<Vec<_>>>()?;
    let logw: Vec<Vec<f64>> = state.sticks[..m]
        .iter()
        .map(|s| crate::mixture::stick_weights(s).iter().map(|w| w.ln()).collect())
        .collect();
    let mut moved = 0;
    let mut buf = vec![0.0; q];
    for i in 1..n_days - 1 {
        if state.phi[i + 1] != state.phi[i - 1] + 1 {
            continue;
        }
        let mut rng = streams.stream(iteration, Purpose::Swap, i as u64);
        let a = state.phi[i - 1];
        let rows = state.latent.rows_of_days(i, i);
        let mut score = [0.0; 2];
        for (o, c) in [a, a + 1].into_iter().enumerate() {
            let mut s = log_transition(&state.transitions, a, c) + log_transition(&state.transitions, c, a + 1);
            for row in rows.clone() {
                let z = state.latent.row(row);
                for k in 0..q {
                    buf[k] = logw[c][k] + factors[c][k].log_density(z);
                }
                s += log_sum_exp(&buf);
            }
            score[o] = s;
        }
        let c = a + categorical_log(&mut rng, &score);
        if c != state.phi[i] {
            moved += 1;
        }
        state.phi[i] = c;
        for row in rows {
            let z = state.latent.row(row);
            for k in 0..q {
                buf[k] = logw[c][k] + factors[c][k].log_density(z);
            }
            state.gamma[row] = categorical_log(&mut rng, &buf);
        }
    }
    Ok(moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::init_latent;
    use crate::sampler::chain::tests::gaussian_stream;
    use crate::sampler::state::{initial_state, PriorConstCache};
    use crate::sampler::SamplerConfig;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn setup(n_days: usize, per_day: usize, shift: impl Fn(usize) -> f64, seed: u64) -> (SamplerState, Streams, NormConstRouter) {
        let ds = gaussian_stream(n_days, per_day, 2, shift, seed);
        let cfg = SamplerConfig {
            components: 1,
            seed,
            ..Default::default()
        };
        let streams = Streams::new(seed);
        let state = initial_state(init_latent(&ds), &cfg, &streams).unwrap();
        (state, streams, NormConstRouter::new(true, 200))
    }

    fn propose(state: &mut SamplerState, streams: &Streams, router: &NormConstRouter, it: u64) -> PhiMove {
        let lpc = PriorConstCache::new(*streams)
            .get(router, &state.graph, &state.hyper.d, state.hyper.nu)
            .unwrap();
        let ctx = PhiContext {
            router,
            log_prior_const: lpc,
            alpha: 1.0,
            streams,
            iteration: it,
        };
        split_merge_phi(state, &ctx).unwrap()
    }

    fn set_means(state: &mut SamplerState, means: &[f64]) {
        for (r, &m) in means.iter().enumerate() {
            state.params[r].mu[0] = DVector::from_element(2, m);
            state.params[r].lambda[0] = DMatrix::identity(2, 2);
        }
    }

    #[test]
    fn split_probability_boundaries() {
        assert_eq!(split_probability(1, 5), 1.0);
        assert_eq!(split_probability(5, 5), 0.0);
        assert_eq!(split_probability(3, 5), 0.5);
        assert_eq!(split_probability(1, 1), 0.0);
    }

    #[test]
    fn swap_follows_overwhelming_likelihood() {
        let (mut base, streams, _) = setup(3, 10, |t| if t >= 1 { 5.0 } else { 0.0 }, 4);
        base.phi = vec![0, 0, 1];
        set_means(&mut base, &[0.0, 5.0]);
        let mut moved = 0;
        for it in 1..=1000 {
            let mut s = base.clone();
            swap_phi(&mut s, &streams, it).unwrap();
            moved += (s.phi[1] == 1) as usize;
            s.check_invariants().unwrap();
        }
        assert!(moved >= 990, "{moved}");
    }

    #[test]
    fn swap_leaves_interior_days() {
        let (mut base, streams, _) = setup(5, 10, |t| if t == 1 { 5.0 } else { 0.0 }, 5);
        base.phi = vec![0, 0, 0, 1, 1];
        set_means(&mut base, &[0.0, 5.0]);
        for it in 1..=200 {
            let mut s = base.clone();
            swap_phi(&mut s, &streams, it).unwrap();
            assert_eq!(&s.phi[..3], &[0, 0, 0]);
        }
    }

    #[test]
    fn two_days_always_propose_split() {
        let (base, streams, router) = setup(2, 20, |t| 4.0 * t as f64, 6);
        let mut accepted = 0;
        for it in 1..=50 {
            let mut s = base.clone();
            match propose(&mut s, &streams, &router, it) {
                PhiMove::Split { accepted: a } => {
                    if a {
                        accepted += 1;
                        assert_eq!(s.phi, vec![0, 1]);
                    }
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(accepted > 40, "{accepted}");
    }

    #[test]
    fn merge_of_identical_regimes_is_accepted() {
        let (mut base, streams, router) = setup(6, 20, |_| 0.0, 7);
        base.phi = vec![0, 0, 0, 1, 1, 1];
        let (mut proposed, mut accepted) = (0, 0);
        for it in 1..=300 {
            let mut s = base.clone();
            if let PhiMove::Merge { accepted: a } = propose(&mut s, &streams, &router, it) {
                proposed += 1;
                accepted += a as usize;
                if a {
                    assert_eq!(s.phi, vec![0; 6]);
                }
            }
        }
        assert!(proposed > 50);
        assert!(accepted as f64 / proposed as f64 > 0.5, "{accepted}/{proposed}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn moves_keep_state_valid(seed in 0u64..1000, cut in 1usize..5) {
            let (mut s, streams, router) = setup(5, 6, |t| t as f64, seed);
            for d in cut..5 {
                s.phi[d] = 1;
            }
            let slots = s.params.len();
            for it in 1..=10 {
                propose(&mut s, &streams, &router, it);
                s.check_invariants().unwrap();
                swap_phi(&mut s, &streams, it).unwrap();
                s.check_invariants().unwrap();
                prop_assert_eq!(s.params.len(), slots);
                prop_assert_eq!(s.sticks.len(), slots);
                prop_assert!(s.phi.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
            }
        }
    }
}
