use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::data::{Cell, LatentLayout, LatentMatrix};
use crate::dist::{normal, truncnorm};
use crate::error::Result;
use crate::linalg::chol_upper;
use crate::mixture::RegimeParams;
use crate::rng::{Purpose, Streams};

/// Conditional mean of coordinate `c` given all others: `μ_c − Λ_cc⁻¹ Σ_{k≠c} Λ_ck (z_k − μ_k)`.
fn cond_mean(z: &[f64], mu: &DVector<f64>, lam: &DMatrix<f64>, c: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..z.len() {
        if k != c {
            s += lam[(c, k)] * (z[k] - mu[k]);
        }
    }
    mu[c] - s / lam[(c, c)]
}

fn draw_interval<R: Rng + ?Sized>(rng: &mut R, z: &mut [f64], mu: &DVector<f64>, lam: &DMatrix<f64>, c: usize, lo: f64, hi: f64) {
    let m = cond_mean(z, mu, lam, c);
    z[c] = truncnorm(rng, m, 1.0 / lam[(c, c)].sqrt(), lo, hi);
}

/// Redraws the unobserved and constrained coordinates of one row.
///
/// Missing coordinates are drawn jointly from their conditional normal, then each
/// interval or argmax coordinate from its truncated univariate conditional.
pub fn draw_latent_row<R: Rng + ?Sized>(
    rng: &mut R,
    z: &mut [f64],
    cells: &[Cell],
    layout: &LatentLayout,
    mu: &DVector<f64>,
    lam: &DMatrix<f64>,
) -> Result<()> {
    let missing: Vec<usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c, Cell::Missing))
        .flat_map(|(j, _)| layout.block(j))
        .collect();
    if !missing.is_empty() {
        let p = z.len();
        let mut is_m = vec![false; p];
        for &c in &missing {
            is_m[c] = true;
        }
        let k = missing.len();
        let lmm = DMatrix::from_fn(k, k, |a, b| lam[(missing[a], missing[b])]);
        // Λ_MO (z_O − μ_O)
        let rhs = DVector::from_fn(k, |a, _| {
            (0..p)
                .filter(|&o| !is_m[o])
                .map(|o| lam[(missing[a], o)] * (z[o] - mu[o]))
                .sum::<f64>()
        });
        let psi = chol_upper(&lmm)?;
        let shift = psi
            .transpose()
            .solve_lower_triangular(&rhs)
            .and_then(|y| psi.solve_upper_triangular(&y))
            .expect("positive diagonal");
        let eps = DVector::from_fn(k, |_, _| normal(rng));
        let noise = psi.solve_upper_triangular(&eps).expect("positive diagonal");
        for a in 0..k {
            z[missing[a]] = mu[missing[a]] - shift[a] + noise[a];
        }
    }
    for (j, cell) in cells.iter().enumerate() {
        match *cell {
            Cell::Fixed | Cell::Missing => {}
            Cell::Interval { lo, hi } => {
                let c = layout.offsets[j];
                draw_interval(rng, z, mu, lam, c, lo, hi);
            }
            Cell::Argmax(l) => {
                let block = layout.block(j);
                let obs = block.start + l;
                for c in block.clone() {
                    if c == obs {
                        let lo = block.clone().filter(|&o| o != obs).map(|o| z[o]).fold(f64::NEG_INFINITY, f64::max);
                        draw_interval(rng, z, mu, lam, c, lo, f64::INFINITY);
                    } else {
                        let hi = z[obs];
                        draw_interval(rng, z, mu, lam, c, f64::NEG_INFINITY, hi);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Redraws every latent row given regime labels per day, component labels per row and parameters per regime.
///
/// Days are processed in parallel, each with its own sub-stream.
pub fn draw_latent(
    latent: &mut LatentMatrix,
    phi: &[usize],
    gamma: &[usize],
    params: &[RegimeParams],
    streams: &Streams,
    iteration: u64,
) -> Result<()> {
    let p = latent.dim();
    let nv = latent.layout.n_vars();
    let layout = &latent.layout;
    let cells = &latent.cells;
    let offsets = &latent.day_offsets;
    let mut chunks: Vec<&mut [f64]> = Vec::with_capacity(phi.len());
    let mut rest: &mut [f64] = &mut latent.values;
    for t in 0..phi.len() {
        let (head, tail) = rest.split_at_mut((offsets[t + 1] - offsets[t]) * p);
        chunks.push(head);
        rest = tail;
    }
    chunks.into_par_iter().enumerate().try_for_each(|(t, rows)| {
        let first = offsets[t];
        let row_cells = &cells[first * nv..offsets[t + 1] * nv];
        if row_cells.iter().all(|c| matches!(c, Cell::Fixed)) {
            return Ok(());
        }
        let rp = &params[phi[t]];
        let mut rng = streams.stream(iteration, Purpose::Latent, t as u64);
        for (i, z) in rows.chunks_exact_mut(p).enumerate() {
            let cs = &row_cells[i * nv..(i + 1) * nv];
            if cs.iter().all(|c| matches!(c, Cell::Fixed)) {
                continue;
            }
            let g = gamma[first + i];
            draw_latent_row(&mut rng, z, cs, layout, &rp.mu[g], &rp.lambda[g])?;
        }
        Ok(())
    })
}

/// Translates each nominal latent block of a regime together with its component means.
///
/// The argmax coding and the Gaussian likelihood are unchanged by a common shift, so the
/// shift is drawn exactly from its Gaussian conditional under the mean prior.
pub fn shift_nominal_blocks<R: Rng + ?Sized>(
    rng: &mut R,
    latent: &mut LatentMatrix,
    bounds: &[(usize, usize)],
    params: &mut [RegimeParams],
    m: &DVector<f64>,
    lambda: f64,
) {
    let p = latent.dim();
    let blocks: Vec<std::ops::Range<usize>> = (0..latent.layout.n_vars())
        .map(|j| latent.layout.block(j))
        .filter(|b| b.len() > 1)
        .collect();
    if blocks.is_empty() {
        return;
    }
    for (r, &(first, last)) in bounds.iter().enumerate() {
        let rows = latent.rows_of_days(first, last);
        let par = &mut params[r];
        for b in &blocks {
            let (mut prec, mut lin) = (0.0, 0.0);
            for (mu, lam) in par.mu.iter().zip(&par.lambda) {
                for i in b.clone() {
                    for k in b.clone() {
                        prec += lam[(i, k)];
                    }
                    for k in 0..p {
                        lin += lam[(i, k)] * (mu[k] - m[k]);
                    }
                }
            }
            if prec <= 0.0 {
                continue;
            }
            let c = -lin / prec + normal(rng) / (lambda * prec).sqrt();
            for mu in par.mu.iter_mut() {
                for i in b.clone() {
                    mu[i] += c;
                }
            }
            for row in rows.clone() {
                for v in &mut latent.values[row * p + b.start..row * p + b.end] {
                    *v += c;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::truncnorm_mean;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(widths: &[usize]) -> LatentLayout {
        let mut offsets = vec![0];
        for w in widths {
            offsets.push(offsets.last().unwrap() + w);
        }
        LatentLayout { offsets }
    }

    #[test]
    fn fixed_rows_untouched() {
        let mut lm = LatentMatrix {
            layout: layout(&[1, 1]),
            values: vec![1.0, 2.0, 3.0, 4.0],
            day_offsets: vec![0, 1, 2],
            cells: vec![Cell::Fixed; 4],
            active_rows: vec![],
        };
        let before = lm.values.clone();
        let params = vec![RegimeParams {
            mu: vec![DVector::zeros(2)],
            lambda: vec![DMatrix::identity(2, 2)],
        }];
        draw_latent(&mut lm, &[0, 0], &[0, 0], &params, &Streams::new(1), 0).unwrap();
        assert_eq!(lm.values, before);
    }

    #[test]
    fn missing_coordinate_independent_under_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lay = layout(&[1, 1]);
        let cells = [Cell::Missing, Cell::Fixed];
        let mu = DVector::zeros(2);
        let lam = DMatrix::identity(2, 2);
        let n = 10_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let mut z = [0.0, 3.0];
            draw_latent_row(&mut rng, &mut z, &cells, &lay, &mu, &lam).unwrap();
            assert_eq!(z[1], 3.0);
            s += z[0];
            s2 += z[0] * z[0];
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        // SE of the sample variance of a standard normal is sqrt(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn missing_uses_conditional_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lay = layout(&[1, 1]);
        let cells = [Cell::Missing, Cell::Fixed];
        let mu = DVector::from_vec(vec![1.0, -1.0]);
        let lam = DMatrix::from_row_slice(2, 2, &[2.0, 0.8, 0.8, 1.0]);
        let n = 20_000;
        let mut s = 0.0;
        for _ in 0..n {
            let mut z = [0.0, 0.5];
            draw_latent_row(&mut rng, &mut z, &cells, &lay, &mu, &lam).unwrap();
            s += z[0];
        }
        let want = 1.0 - 0.8 / 2.0 * 1.5;
        assert!((s / n as f64 - want).abs() < 3.0 * (0.5 / n as f64).sqrt());
    }

    #[test]
    fn binary_truncated_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lay = layout(&[1]);
        let cells = [Cell::Interval { lo: 0.0, hi: f64::INFINITY }];
        let mu = DVector::from_element(1, -2.0);
        let lam = DMatrix::identity(1, 1);
        let n = 10_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let mut z = [0.5];
            draw_latent_row(&mut rng, &mut z, &cells, &lay, &mu, &lam).unwrap();
            assert!(z[0] >= 0.0);
            draws.push(z[0]);
        }
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        let want = truncnorm_mean(-2.0, 1.0, 0.0, f64::INFINITY);
        assert!((mean - want).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn nominal_argmax_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let lay = layout(&[3, 1]);
        let cells = [Cell::Argmax(1), Cell::Missing];
        let mu = DVector::from_vec(vec![2.0, -1.0, 0.5, 0.0]);
        let lam = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.5 } else { 0.2 });
        let mut z = [-1.0, 1.0, -1.0, 0.0];
        for _ in 0..2000 {
            draw_latent_row(&mut rng, &mut z, &cells, &lay, &mu, &lam).unwrap();
            assert!(z[1] > z[0] && z[1] > z[2]);
        }
    }

    #[test]
    fn independent_of_thread_count() {
        let mk = || LatentMatrix {
            layout: layout(&[1, 1]),
            values: vec![0.0; 40],
            day_offsets: vec![0, 5, 10, 15, 20],
            cells: (0..40)
                .map(|k| if k % 3 == 0 { Cell::Missing } else { Cell::Interval { lo: 0.0, hi: 1.0 } })
                .collect(),
            active_rows: vec![],
        };
        let params = vec![RegimeParams {
            mu: vec![DVector::zeros(2)],
            lambda: vec![DMatrix::identity(2, 2)],
        }];
        let run = |threads: usize| {
            let mut lm = mk();
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| draw_latent(&mut lm, &[0; 4], &[0; 20], &params, &Streams::new(9), 2).unwrap());
            lm.values
        };
        assert_eq!(run(1), run(4));
    }
}
