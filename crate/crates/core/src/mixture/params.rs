use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::hyper::{ngw_posterior, NgwHyper, SuffStats};
use crate::dist::normal;
use crate::error::Result;
use crate::graph::Graph;
use crate::gwishart::sample_gwishart_matrix;
use crate::linalg::{chol_upper, mvn_from_precision_chol, PrecisionFactor};

/// Means and graph-constrained precisions of one regime's `Q` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub mu: Vec<DVector<f64>>,
    pub lambda: Vec<DMatrix<f64>>,
}

impl RegimeParams {
    pub fn n_components(&self) -> usize {
        self.mu.len()
    }

    pub fn factors(&self) -> Result<Vec<PrecisionFactor>> {
        self.mu
            .iter()
            .zip(&self.lambda)
            .map(|(m, l)| PrecisionFactor::new(m, l))
            .collect()
    }
}

/// One `(μ, Λ)` draw from the NG-W posterior given the component's rows.
pub fn sample_component<R: Rng + ?Sized>(
    rng: &mut R,
    hyper: &NgwHyper,
    graph: &Graph,
    stats: &SuffStats,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let post = ngw_posterior(hyper, stats);
    let lambda = sample_gwishart_matrix(rng, graph, &post.d, post.nu)?;
    let psi = chol_upper(&(&lambda * post.lambda))?;
    let eps = DVector::from_fn(hyper.dim(), |_, _| normal(rng));
    let mu = mvn_from_precision_chol(&post.m, &psi, eps);
    Ok((mu, lambda))
}

/// Draws every component from its posterior; empty components come from the prior.
pub fn sample_regime_params<R: Rng + ?Sized>(
    rng: &mut R,
    hyper: &NgwHyper,
    graph: &Graph,
    data_by_component: &[SuffStats],
) -> Result<RegimeParams> {
    let mut mu = Vec::with_capacity(data_by_component.len());
    let mut lambda = Vec::with_capacity(data_by_component.len());
    for s in data_by_component {
        let (m, l) = sample_component(rng, hyper, graph, s)?;
        mu.push(m);
        lambda.push(l);
    }
    Ok(RegimeParams { mu, lambda })
}
