use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dist::{gamma_rate, normal};
use crate::error::Result;
use crate::linalg::{chol_upper, mvn_from_precision_chol};
use crate::mixture::{NgwHyper, RegimeParams};

/// Gibbs draws of the NG-W mean hyperparameters: `m` given `λ`, then `λ` given `m`.
///
/// `m` has prior `N(m0, I)`; `λ` has prior `Gamma(c, d)` (rate `d`).
pub fn update_mean_hyper<R: Rng + ?Sized>(rng: &mut R, hyper: &mut NgwHyper, params: &[RegimeParams]) -> Result<()> {
    let p = hyper.dim();
    let lam = hyper.lambda;
    let mut prec = DMatrix::<f64>::identity(p, p);
    let mut rhs = hyper.m0.clone();
    let mut count = 0usize;
    for rp in params {
        for (mu, l) in rp.mu.iter().zip(&rp.lambda) {
            prec += l * lam;
            rhs += l * mu * lam;
            count += 1;
        }
    }
    let psi = chol_upper(&prec)?;
    let mean = psi
        .transpose()
        .solve_lower_triangular(&rhs)
        .and_then(|y| psi.solve_upper_triangular(&y))
        .expect("positive diagonal");
    let eps = DVector::from_fn(p, |_, _| normal(rng));
    hyper.m = mvn_from_precision_chol(&mean, &psi, eps);

    let mut quad = 0.0;
    for rp in params {
        for (mu, l) in rp.mu.iter().zip(&rp.lambda) {
            let d = mu - &hyper.m;
            quad += (d.transpose() * l * &d)[(0, 0)];
        }
    }
    hyper.lambda = gamma_rate(rng, hyper.c + (count * p) as f64 / 2.0, hyper.d_rate + 0.5 * quad);
    Ok(())
}
