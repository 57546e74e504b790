use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Upper-triangular factor `Ψ` of a precision `Λ = Ψ'Ψ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholFactor {
    pub psi: DMatrix<f64>,
}

impl CholFactor {
    pub fn precision(&self) -> DMatrix<f64> {
        self.psi.transpose() * &self.psi
    }
}

/// Fills the non-free entries of `Ψ` so that `(Ψ'Ψ)_{ij} = 0` off the graph.
///
/// Only the diagonal and the upper entries at edges of `graph` are read.
pub fn complete_cholesky(free: &DMatrix<f64>, graph: &Graph) -> Result<CholFactor> {
    let mut psi = free.clone();
    complete_cholesky_in_place(&mut psi, graph)?;
    Ok(CholFactor { psi })
}

pub fn complete_cholesky_in_place(psi: &mut DMatrix<f64>, graph: &Graph) -> Result<()> {
    let n = psi.nrows();
    for i in 0..n {
        let d = psi[(i, i)];
        if !(d > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: i, value: d });
        }
        for j in 0..i {
            psi[(i, j)] = 0.0;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if graph.has_edge(i, j) {
                continue;
            }
            let mut s = 0.0;
            for l in 0..i {
                s += psi[(l, i)] * psi[(l, j)];
            }
            psi[(i, j)] = -s / psi[(i, i)];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_spd;
    use proptest::prelude::*;

    #[test]
    fn diagonal_case_gives_identity() {
        let f = complete_cholesky(&DMatrix::identity(2, 2), &Graph::empty(2)).unwrap();
        assert_eq!(f.precision(), DMatrix::identity(2, 2));
    }

    #[test]
    fn full_graph_is_untouched() {
        let free = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.0, 2.0, 0.7, 0.0, 0.0, 0.5]);
        let f = complete_cholesky(&free, &Graph::full(3)).unwrap();
        assert_eq!(f.psi, free);
    }

    #[test]
    fn chain_graph_zero() {
        let free = DMatrix::from_row_slice(3, 3, &[1.3, 0.4, 9.0, 0.0, 0.8, -1.1, 0.0, 0.0, 2.1]);
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]);
        let f = complete_cholesky(&free, &g).unwrap();
        let lam = f.precision();
        assert!(lam[(0, 2)].abs() < 1e-12);
        assert!(is_spd(&lam));
        // row 0 non-edge is zero
        assert_eq!(f.psi[(0, 2)], 0.0);
    }

    #[test]
    fn rejects_nonpositive_diagonal() {
        let mut free = DMatrix::identity(3, 3);
        free[(1, 1)] = 0.0;
        assert!(matches!(
            complete_cholesky(&free, &Graph::empty(3)),
            Err(Error::NonPositiveDiagonal { index: 1, .. })
        ));
    }

    fn graph_and_free() -> impl Strategy<Value = (Graph, DMatrix<f64>)> {
        (2usize..7).prop_flat_map(|n| {
            let m = n * (n - 1) / 2;
            (
                proptest::collection::vec(any::<bool>(), m),
                proptest::collection::vec(0.1f64..3.0, n),
                proptest::collection::vec(-2.0f64..2.0, m),
            )
                .prop_map(move |(mask, diag, off)| {
                    let mut g = Graph::empty(n);
                    let mut free = DMatrix::zeros(n, n);
                    for k in 0..m {
                        let (i, j) = Graph::pair_from_index(n, k);
                        if mask[k] {
                            g.add_edge(i, j);
                        }
                        free[(i, j)] = off[k];
                    }
                    for i in 0..n {
                        free[(i, i)] = diag[i];
                    }
                    (g, free)
                })
        })
    }

    proptest! {
        #[test]
        fn completion_zeroes_non_edges((g, free) in graph_and_free()) {
            let f = complete_cholesky(&free, &g).unwrap();
            let lam = f.precision();
            let n = g.n();
            for i in 0..n {
                for j in (i + 1)..n {
                    if g.has_edge(i, j) {
                        prop_assert_eq!(f.psi[(i, j)], free[(i, j)]);
                    } else {
                        prop_assert!(lam[(i, j)].abs() < 1e-10 * (1.0 + lam[(i, i)].abs().max(lam[(j, j)].abs())));
                    }
                }
                prop_assert_eq!(f.psi[(i, i)], free[(i, i)]);
            }
            prop_assert!(is_spd(&lam));
        }

        #[test]
        fn completion_is_idempotent((g, free) in graph_and_free()) {
            let once = complete_cholesky(&free, &g).unwrap();
            let twice = complete_cholesky(&once.psi, &g).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
