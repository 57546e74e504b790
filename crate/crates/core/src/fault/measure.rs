use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inv_spd, submatrix, subvector, symmetrize};
use crate::sampler::RegimeSnapshot;

/// A finite mixture of multivariate Gaussians in covariance form.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMeasure {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

impl MixtureMeasure {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covs: Vec<DMatrix<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != covs.len() {
            return Err(Error::Invalid("mixture needs matching non-empty weights, means and covariances".into()));
        }
        let p = means[0].len();
        if means.iter().any(|m| m.len() != p) || covs.iter().any(|c| c.nrows() != p || c.ncols() != p) {
            return Err(Error::Invalid("mixture components differ in dimension".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid("mixture weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Invalid("mixture weights sum to zero".into()));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            means,
            covs,
        })
    }

    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![cov])
    }

    /// Builds the measure stored for one regime, inverting each precision.
    pub fn from_snapshot(r: &RegimeSnapshot) -> Result<Self> {
        let covs = r
            .precisions
            .iter()
            .map(|rows| {
                let p = rows.len();
                let lam = DMatrix::from_fn(p, p, |i, j| rows[i][j]);
                let mut c = inv_spd(&lam)?;
                symmetrize(&mut c);
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?;
        let means = r.means.iter().map(|m| DVector::from_column_slice(m)).collect();
        Self::new(r.weights.clone(), means, covs)
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Marginal over the listed coordinates, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| subvector(m, idx)).collect(),
            covs: self.covs.iter().map(|c| submatrix(c, idx, idx)).collect(),
        }
    }

    /// Marginal without variable `drop`.
    pub fn marginalize(&self, drop: usize) -> Self {
        let keep: Vec<usize> = (0..self.dim()).filter(|&i| i != drop).collect();
        self.select(&keep)
    }

    /// One-dimensional marginal of variable `keep`.
    pub fn marginal(&self, keep: usize) -> Self {
        self.select(&[keep])
    }
}
