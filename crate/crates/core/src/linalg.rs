//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Upper-triangular `Ψ` with `a = Ψ'Ψ`.
pub fn chol_upper(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = a
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("cholesky"))?;
    Ok(c.l().transpose())
}

pub fn logdet_spd(a: &DMatrix<f64>) -> Result<f64> {
    let c = a
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("logdet"))?;
    Ok(2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn inv_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = a
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("inverse"))?;
    let mut inv = c.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn is_spd(a: &DMatrix<f64>) -> bool {
    a.clone().cholesky().is_some()
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// `tr(a'b)` for equally-shaped matrices.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A precision matrix prepared for repeated Gaussian density evaluations.
#[derive(Debug, Clone)]
pub struct PrecisionFactor {
    /// Upper Cholesky factor of the precision.
    pub psi: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// `-p/2 log 2π + 1/2 logdet Λ`
    pub log_norm: f64,
}

impl PrecisionFactor {
    pub fn new(mean: &DVector<f64>, precision: &DMatrix<f64>) -> Result<Self> {
        let psi = chol_upper(precision)?;
        let p = precision.nrows();
        let half_logdet: f64 = psi.diagonal().iter().map(|d| d.ln()).sum();
        Ok(Self {
            psi,
            mean: mean.clone(),
            log_norm: -0.5 * p as f64 * LN_2PI + half_logdet,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Log density at a row given as a slice.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let p = self.mean.len();
        let mut q = 0.0;
        for i in 0..p {
            let mut s = 0.0;
            for k in i..p {
                s += self.psi[(i, k)] * (x[k] - self.mean[k]);
            }
            q += s * s;
        }
        self.log_norm - 0.5 * q
    }
}

/// Draws `x ~ N(mean, precision^{-1})` given the upper Cholesky factor of the precision.
pub fn mvn_from_precision_chol(
    mean: &DVector<f64>,
    psi: &DMatrix<f64>,
    eps: DVector<f64>,
) -> DVector<f64> {
    let x = psi
        .solve_upper_triangular(&eps)
        .expect("cholesky factor has positive diagonal");
    mean + x
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalizes log weights in place into probabilities.
pub fn softmax_in_place(xs: &mut [f64]) {
    let lse = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x = (*x - lse).exp();
    }
}
