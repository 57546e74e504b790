use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::graph::Graph;
use crate::linalg::{logdet_spd, softmax_in_place, LN_2PI};
use crate::mixture::{sample_component, NgwHyper, SuffStats};

/// Gaussian log-likelihood of a set of rows summarized by `stats`.
pub fn loglik_from_stats(stats: &SuffStats, mu: &DVector<f64>, lam: &DMatrix<f64>) -> Result<f64> {
    if stats.n == 0 {
        return Ok(0.0);
    }
    let p = mu.len() as f64;
    let n = stats.n as f64;
    let cross = &stats.sum * mu.transpose();
    let centered = &stats.sxx - &cross - cross.transpose() + mu * mu.transpose() * n;
    let quad = lam.component_mul(&centered).sum();
    Ok(-0.5 * n * p * LN_2PI + 0.5 * n * logdet_spd(lam)? - 0.5 * quad)
}

/// Split points evaluated directly for a regime of `r` days; the rest are interpolated.
///
/// Split point `s` puts the first `s` days on the left. Short regimes are evaluated in
/// full; longer ones at `1`, every multiple of ten, `r − 1` and one random point per
/// ten-day stratum beyond the first.
pub fn anchor_points<R: Rng + ?Sized>(rng: &mut R, r: usize) -> Vec<usize> {
    let last = r - 1;
    if last <= 10 {
        return (1..=last).collect();
    }
    let k = r / 10;
    let mut pts: Vec<usize> = vec![1, last];
    pts.extend((1..=k).map(|j| 10 * j).filter(|&s| s <= last));
    for j in 2..=k {
        let lo = 10 * (j - 1) + 1;
        let hi = (10 * j).min(last + 1);
        if lo < hi {
            pts.push(rng.random_range(lo..hi));
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Proposal mass over the `r − 1` split points of a regime with per-day statistics `day_stats`.
///
/// Each evaluated point draws one Gaussian per side from its NG-W posterior and scores
/// the two-sided likelihood; log scores are interpolated linearly between evaluated points.
pub fn split_point_distribution<R: Rng + ?Sized>(
    rng: &mut R,
    day_stats: &[SuffStats],
    hyper: &NgwHyper,
    graph: &Graph,
) -> Result<Vec<f64>> {
    let r = day_stats.len();
    assert!(r >= 2, "regime must span at least two days");
    if r == 2 {
        return Ok(vec![1.0]);
    }
    let p = hyper.dim();
    let mut prefix = Vec::with_capacity(r + 1);
    prefix.push(SuffStats::zero(p));
    for s in day_stats {
        let next = prefix.last().unwrap().add(s);
        prefix.push(next);
    }
    let total = &prefix[r];
    let anchors = anchor_points(rng, r);
    let mut scores = Vec::with_capacity(anchors.len());
    for &s in &anchors {
        let left = &prefix[s];
        let right = SuffStats {
            n: total.n - left.n,
            sum: &total.sum - &left.sum,
            sxx: &total.sxx - &left.sxx,
        };
        let (ml, ll) = sample_component(rng, hyper, graph, left)?;
        let (mr, lr) = sample_component(rng, hyper, graph, &right)?;
        scores.push(loglik_from_stats(left, &ml, &ll)? + loglik_from_stats(&right, &mr, &lr)?);
    }
    let mut logp = vec![0.0; r - 1];
    for w in 0..anchors.len() {
        logp[anchors[w] - 1] = scores[w];
        if w + 1 < anchors.len() {
            let (a, b) = (anchors[w], anchors[w + 1]);
            for s in a + 1..b {
                let f = (s - a) as f64 / (b - a) as f64;
                logp[s - 1] = scores[w] * (1.0 - f) + scores[w + 1] * f;
            }
        }
    }
    softmax_in_place(&mut logp);
    Ok(logp)
}
