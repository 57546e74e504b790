use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::Graph;
use crate::gwishart::NormConstRouter;
use crate::linalg::LN_2PI;

/// Normal G-Wishart hyperparameters with the hyperpriors on `m` and `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgwHyper {
    pub m: DVector<f64>,
    pub lambda: f64,
    pub d: DMatrix<f64>,
    pub nu: f64,
    /// Gamma shape for `λ`.
    pub c: f64,
    /// Gamma rate for `λ`.
    pub d_rate: f64,
    /// Centre of the `N(m0, I)` prior on `m`.
    pub m0: DVector<f64>,
}

impl NgwHyper {
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

/// Count, sum and raw cross-product of a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub n: usize,
    pub sum: DVector<f64>,
    pub sxx: DMatrix<f64>,
}

impl SuffStats {
    pub fn zero(p: usize) -> Self {
        Self {
            n: 0,
            sum: DVector::zeros(p),
            sxx: DMatrix::zeros(p, p),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        let p = self.sum.len();
        self.n += 1;
        for a in 0..p {
            self.sum[a] += row[a];
            let ra = row[a];
            for b in a..p {
                self.sxx[(a, b)] += ra * row[b];
            }
        }
    }

    /// Stats of all rows in a row-major slice.
    pub fn from_rows(rows: &[f64], p: usize) -> Self {
        let mut s = Self::zero(p);
        for r in rows.chunks_exact(p) {
            s.push(r);
        }
        s.finish()
    }

    /// Mirrors the upper triangle accumulated by `push`.
    pub fn finish(mut self) -> Self {
        let p = self.sum.len();
        for a in 0..p {
            for b in 0..a {
                self.sxx[(a, b)] = self.sxx[(b, a)];
            }
        }
        self
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n + other.n,
            sum: &self.sum + &other.sum,
            sxx: &self.sxx + &other.sxx,
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.sum / self.n as f64
    }

    /// Centered scatter `Σ (z - z̄)(z - z̄)'`.
    pub fn scatter(&self) -> DMatrix<f64> {
        if self.n == 0 {
            return DMatrix::zeros(self.sum.len(), self.sum.len());
        }
        let zbar = self.mean();
        &self.sxx - &zbar * zbar.transpose() * self.n as f64
    }
}

/// Conjugate update of `(m, λ, D, ν)` on the given rows.
pub fn ngw_posterior(hyper: &NgwHyper, stats: &SuffStats) -> NgwHyper {
    if stats.n == 0 {
        return hyper.clone();
    }
    let n = stats.n as f64;
    let zbar = stats.mean();
    let lam = hyper.lambda;
    let diff = &zbar - &hyper.m;
    let mut d = &hyper.d + stats.scatter() + &diff * diff.transpose() * (lam * n / (lam + n));
    crate::linalg::symmetrize(&mut d);
    NgwHyper {
        m: (&hyper.m * lam + &zbar * n) / (lam + n),
        lambda: lam + n,
        d,
        nu: hyper.nu + n,
        ..hyper.clone()
    }
}

/// Log marginal likelihood of rows under the NG-W prior, `(μ, Λ)` integrated out.
///
/// `log_prior_const` is `log I_G(ν, D)`, shared by every call with the same graph.
pub fn log_marginal_likelihood(
    hyper: &NgwHyper,
    stats: &SuffStats,
    graph: &Graph,
    router: &NormConstRouter,
    log_prior_const: f64,
) -> Result<f64> {
    if stats.n == 0 {
        return Ok(0.0);
    }
    let p = hyper.dim() as f64;
    let n = stats.n as f64;
    let post = ngw_posterior(hyper, stats);
    let log_post = router.posterior(graph, &post.d, post.nu)?;
    Ok(-0.5 * n * p * LN_2PI + 0.5 * p * (hyper.lambda / (hyper.lambda + n)).ln() + log_post - log_prior_const)
}
