use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{chi_square, normal};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{chol_upper, frob_inner, inv_spd, logdet_spd, max_abs_diff, submatrix, symmetrize};

const TOL: f64 = 1e-8;

/// A precision matrix whose off-diagonal zeros follow `graph`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPrecision {
    pub lambda: DMatrix<f64>,
    pub graph: Graph,
}

impl GPrecision {
    /// Checks the zero pattern and positive-definiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        for i in 0..n {
            for j in (i + 1)..n {
                if !self.graph.has_edge(i, j) && self.lambda[(i, j)] != 0.0 {
                    return Err(Error::Invalid(format!(
                        "precision entry ({i}, {j}) = {} off the graph",
                        self.lambda[(i, j)]
                    )));
                }
            }
        }
        chol_upper(&self.lambda).map(|_| ())
    }
}

/// Full Wishart draw with `df` degrees of freedom and the given scale (Bartlett).
pub fn sample_wishart<R: Rng + ?Sized>(rng: &mut R, df: f64, scale: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    let l = scale
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("wishart scale"))?
        .l();
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = chi_square(rng, df - i as f64).sqrt();
        for j in 0..i {
            a[(i, j)] = normal(rng);
        }
    }
    let la = l * a;
    let mut k = &la * la.transpose();
    symmetrize(&mut k);
    Ok(k)
}

/// Exact G-Wishart draw by iterative projection of a full Wishart draw.
pub fn sample_gwishart<R: Rng + ?Sized>(rng: &mut R, graph: &Graph, d: &DMatrix<f64>, nu: f64) -> Result<GPrecision> {
    let lambda = sample_gwishart_matrix(rng, graph, d, nu)?;
    let out = GPrecision {
        lambda,
        graph: graph.clone(),
    };
    debug_assert!(out.validate().is_ok());
    Ok(out)
}

pub fn sample_gwishart_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    graph: &Graph,
    d: &DMatrix<f64>,
    nu: f64,
) -> Result<DMatrix<f64>> {
    let p = d.nrows();
    let d_inv = inv_spd(d)?;
    let k = sample_wishart(rng, nu + p as f64 - 1.0, &d_inv)?;
    if graph.is_full() {
        return Ok(k);
    }
    let sigma = inv_spd(&k)?;
    let mut w = sigma.clone();
    let nbrs: Vec<Vec<usize>> = (0..p).map(|j| graph.neighbors(j)).collect();
    let max_iter = 100 * p.max(1);
    let mut converged = false;
    for _ in 0..max_iter {
        let prev = w.clone();
        for j in 0..p {
            let nb = &nbrs[j];
            let mut col = DVector::zeros(p);
            if !nb.is_empty() {
                let w_nn = submatrix(&w, nb, nb);
                let s_nj = DVector::from_iterator(nb.len(), nb.iter().map(|&i| sigma[(i, j)]));
                let beta = w_nn
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite("projection block"))?
                    .solve(&s_nj);
                for i in 0..p {
                    if i == j {
                        continue;
                    }
                    let mut s = 0.0;
                    for (b, &n) in nb.iter().enumerate() {
                        s += w[(i, n)] * beta[b];
                    }
                    col[i] = s;
                }
            }
            for i in 0..p {
                if i != j {
                    w[(i, j)] = col[i];
                    w[(j, i)] = col[i];
                }
            }
        }
        if max_abs_diff(&w, &prev) < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "g-wishart sampler",
            iterations: max_iter,
        });
    }
    let mut lambda = inv_spd(&w)?;
    for i in 0..p {
        for j in 0..p {
            if i != j && !graph.has_edge(i, j) {
                lambda[(i, j)] = 0.0;
            }
        }
    }
    symmetrize(&mut lambda);
    Ok(lambda)
}

/// `((ν-2)/2) logdet Λ - tr(DΛ)/2`.
pub fn log_gwishart_unnorm(lambda: &DMatrix<f64>, d: &DMatrix<f64>, nu: f64) -> Result<f64> {
    Ok(0.5 * (nu - 2.0) * logdet_spd(lambda)? - 0.5 * frob_inner(d, lambda))
}
