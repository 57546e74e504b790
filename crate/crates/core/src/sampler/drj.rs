use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::config::GraphMode;
use crate::dist::normal;
use crate::error::Result;
use crate::graph::Graph;
use crate::gwishart::{complete_cholesky_in_place, sample_gwishart_matrix};
use crate::linalg::{chol_upper, frob_inner};
use crate::rng::ChainRng;

/// Data-side precision of one occupied component: its current `Λ` and posterior scale.
pub struct DrjComponent {
    pub lambda: DMatrix<f64>,
    pub d_post: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DrjOutcome {
    /// Proposal left the allowed graph class.
    Outside,
    Rejected,
    Accepted { graph: Graph, lambdas: Vec<DMatrix<f64>> },
}

/// Log acceptance contribution of one component and its proposed precision.
///
/// The data-side precision is moved to `proposed` by a Cholesky perturbation of the
/// toggled entry; an auxiliary prior draw under `proposed` is moved back to `current`,
/// so the G-Wishart normalizing constants cancel.
fn component_term(
    rng: &mut ChainRng,
    comp: &DrjComponent,
    current: &Graph,
    proposed: &Graph,
    edge: (usize, usize),
    d_prior: &DMatrix<f64>,
    nu: f64,
    sigma: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let (l, m) = edge;
    let adding = proposed.has_edge(l, m);
    let sign = if adding { 1.0 } else { -1.0 };
    let two_s2 = 2.0 * sigma * sigma;

    let psi = chol_upper(&comp.lambda)?;
    let mut psi_new = psi.clone();
    if adding {
        psi_new[(l, m)] = psi[(l, m)] + sigma * normal(rng);
    }
    complete_cholesky_in_place(&mut psi_new, proposed)?;
    let lambda_new = psi_new.transpose() * &psi_new;
    let data = -0.5 * frob_inner(&(&lambda_new - &comp.lambda), &comp.d_post)
        + sign * (psi[(l, l)].ln() + (psi_new[(l, m)] - psi[(l, m)]).powi(2) / two_s2);

    let aux = sample_gwishart_matrix(rng, proposed, d_prior, nu)?;
    let phi = chol_upper(&aux)?;
    let mut phi0 = phi.clone();
    if !adding {
        phi0[(l, m)] = phi[(l, m)] + sigma * normal(rng);
    }
    complete_cholesky_in_place(&mut phi0, current)?;
    let aux0 = phi0.transpose() * &phi0;
    let aux_term = -0.5 * frob_inner(&(&aux0 - &aux), d_prior)
        - sign * (phi[(l, l)].ln() + (phi0[(l, m)] - phi[(l, m)]).powi(2) / two_s2);
    Ok((data + aux_term, lambda_new))
}

/// One double reversible-jump proposal toggling a uniformly chosen edge.
///
/// All components share the graph, so the move is accepted or rejected jointly with
/// the per-component factors multiplied. `component_rngs` supplies one stream per component.
#[allow(clippy::too_many_arguments)]
pub fn drj_step(
    rng: &mut ChainRng,
    component_rngs: Vec<ChainRng>,
    graph: &Graph,
    components: &[DrjComponent],
    d_prior: &DMatrix<f64>,
    nu: f64,
    rho: f64,
    sigma: f64,
    mode: GraphMode,
) -> Result<DrjOutcome> {
    let p = graph.n();
    if p < 2 || mode == GraphMode::Full {
        return Ok(DrjOutcome::Outside);
    }
    let edge = Graph::pair_from_index(p, rng.random_range(0..graph.max_edges()));
    let mut proposed = graph.clone();
    proposed.toggle(edge.0, edge.1);
    let u: f64 = rng.random();
    if mode == GraphMode::Decomposable && !proposed.is_decomposable() {
        return Ok(DrjOutcome::Outside);
    }
    let terms: Vec<(f64, DMatrix<f64>)> = components
        .par_iter()
        .zip(component_rngs.into_par_iter())
        .map(|(c, mut r)| component_term(&mut r, c, graph, &proposed, edge, d_prior, nu, sigma))
        .collect::<Result<_>>()?;
    let log_a = proposed.log_prior(rho) - graph.log_prior(rho) + terms.iter().map(|t| t.0).sum::<f64>();
    if u.ln() < log_a {
        Ok(DrjOutcome::Accepted {
            graph: proposed,
            lambdas: terms.into_iter().map(|t| t.1).collect(),
        })
    } else {
        Ok(DrjOutcome::Rejected)
    }
}
