use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::measure::MixtureMeasure;
use crate::dist::normal;
use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn chol_lower(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.l()).ok_or(Error::Singular(what))
}

/// Squared Hellinger distance between two Gaussians.
pub fn gaussian_hellinger_sq(
    m1: &DVector<f64>,
    c1: &DMatrix<f64>,
    m2: &DVector<f64>,
    c2: &DMatrix<f64>,
) -> Result<f64> {
    let half_logdet = |l: &DMatrix<f64>| l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let l1 = chol_lower(c1, "component covariance")?;
    let l2 = chol_lower(c2, "component covariance")?;
    let avg = (c1 + c2) * 0.5;
    let chol = avg.clone().cholesky().ok_or(Error::Singular("averaged covariance"))?;
    let delta = m1 - m2;
    let quad = delta.dot(&chol.solve(&delta));
    let ln_aff = 0.5 * half_logdet(&l1) + 0.5 * half_logdet(&l2) - half_logdet(&chol.l()) - quad / 8.0;
    Ok((1.0 - ln_aff.exp()).clamp(0.0, 1.0))
}

struct Compiled {
    log_w: Vec<f64>,
    cum_w: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major lower Cholesky factors of the covariances.
    lower: Vec<Vec<f64>>,
    log_norm: Vec<f64>,
    p: usize,
}

impl Compiled {
    fn new(q: &MixtureMeasure) -> Result<Self> {
        let p = q.dim();
        let mut lower = Vec::new();
        let mut log_norm = Vec::new();
        for c in &q.covs {
            let l = chol_lower(c, "component covariance")?;
            let half: f64 = l.diagonal().iter().map(|d| d.ln()).sum();
            log_norm.push(-0.5 * p as f64 * LN_2PI - half);
            lower.push((0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect());
        }
        let mut acc = 0.0;
        let cum_w = q
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            log_w: q.weights.iter().map(|w| w.ln()).collect(),
            cum_w,
            means: q.means.iter().map(|m| m.iter().cloned().collect()).collect(),
            lower,
            log_norm,
            p,
        })
    }

    fn log_density(&self, x: &[f64], y: &mut [f64], terms: &mut Vec<f64>) -> f64 {
        let p = self.p;
        terms.clear();
        for k in 0..self.log_w.len() {
            if self.log_w[k] == f64::NEG_INFINITY {
                continue;
            }
            let l = &self.lower[k];
            let mu = &self.means[k];
            let mut q = 0.0;
            for i in 0..p {
                let mut s = x[i] - mu[i];
                for j in 0..i {
                    s -= l[i * p + j] * y[j];
                }
                y[i] = s / l[i * p + i];
                q += y[i] * y[i];
            }
            terms.push(self.log_w[k] + self.log_norm[k] - 0.5 * q);
        }
        log_sum_exp(terms)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64], z: &mut [f64]) {
        let u: f64 = rng.random();
        let k = self.cum_w.iter().position(|&c| u < c).unwrap_or(self.cum_w.len() - 1);
        let p = self.p;
        for zi in z.iter_mut() {
            *zi = normal(rng);
        }
        let l = &self.lower[k];
        for i in 0..p {
            let mut s = self.means[k][i];
            for j in 0..=i {
                s += l[i * p + j] * z[j];
            }
            x[i] = s;
        }
    }
}

/// Monte Carlo estimate of the Bhattacharyya affinity and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityEstimate {
    pub affinity: f64,
    pub se: f64,
}

/// Importance-sampled affinity `∫√(f₁f₂)` with proposal `½(f₁+f₂)`.
///
/// Even draws come from `q1` and odd draws from `q2`.
pub fn affinity_mc<R: Rng + ?Sized>(
    q1: &MixtureMeasure,
    q2: &MixtureMeasure,
    n_mc: usize,
    rng: &mut R,
) -> Result<AffinityEstimate> {
    if q1.dim() != q2.dim() {
        return Err(Error::Invalid("measures differ in dimension".into()));
    }
    if n_mc < 2 {
        return Err(Error::Config("n_mc must be at least 2".into()));
    }
    let c1 = Compiled::new(q1)?;
    let c2 = Compiled::new(q2)?;
    let p = q1.dim();
    let (mut x, mut z, mut y) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
    let mut terms = Vec::new();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for s in 0..n_mc {
        if s % 2 == 0 {
            c1.sample(rng, &mut x, &mut z);
        } else {
            c2.sample(rng, &mut x, &mut z);
        }
        let l1 = c1.log_density(&x, &mut y, &mut terms);
        let l2 = c2.log_density(&x, &mut y, &mut terms);
        let hi = l1.max(l2);
        let lmix = hi + (0.5 * ((l1 - hi).exp() + (l2 - hi).exp())).ln();
        let w = (0.5 * (l1 + l2) - lmix).exp();
        sum += w;
        sum_sq += w * w;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(AffinityEstimate {
        affinity: mean,
        se: (var / n).sqrt(),
    })
}

/// Hellinger distance in `[0, 1]`.
///
/// Closed form when both measures have one component, otherwise the Monte Carlo affinity.
pub fn hellinger<R: Rng + ?Sized>(
    q1: &MixtureMeasure,
    q2: &MixtureMeasure,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    if q1.dim() != q2.dim() {
        return Err(Error::Invalid("measures differ in dimension".into()));
    }
    let h2 = if q1.n_components() == 1 && q2.n_components() == 1 {
        gaussian_hellinger_sq(&q1.means[0], &q1.covs[0], &q2.means[0], &q2.covs[0])?
    } else {
        1.0 - affinity_mc(q1, q2, n_mc, rng)?.affinity
    };
    Ok(h2.clamp(0.0, 1.0).sqrt())
}
