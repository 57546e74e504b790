use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::Rng;

use crate::dist::{chi_square, ln_gamma, ln_mvgamma, normal};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{chol_upper, inv_spd, logdet_spd, max_abs_diff, submatrix, symmetrize, LN_2PI};

const IPS_TOL: f64 = 1e-8;

/// Closed-form `log I` for the complete graph.
pub fn log_norm_const_full(nu: f64, d: &DMatrix<f64>) -> Result<f64> {
    let p = d.nrows();
    if p == 0 {
        return Ok(0.0);
    }
    let pf = p as f64;
    let df = nu + pf - 1.0;
    Ok(df * pf / 2.0 * std::f64::consts::LN_2 + ln_mvgamma(p, df / 2.0) - df / 2.0 * logdet_spd(d)?)
}

/// Closed-form `log I` for the graph without edges.
pub fn log_norm_const_empty(nu: f64, d: &DMatrix<f64>) -> f64 {
    (0..d.nrows())
        .map(|j| ln_gamma(nu / 2.0) + nu / 2.0 * (2.0 / d[(j, j)]).ln())
        .sum()
}

/// Monte-Carlo estimate of `log I` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub log_value: f64,
    pub std_error: f64,
}

/// Importance-sampling estimator on the Cholesky scale of `D^{-1}`.
pub fn log_norm_const_mc<R: Rng + ?Sized>(
    rng: &mut R,
    graph: &Graph,
    d: &DMatrix<f64>,
    nu: f64,
    n_mc: usize,
) -> Result<McEstimate> {
    let p = d.nrows();
    let t = chol_upper(&inv_spd(d)?)?;
    let mut base = graph.edge_count() as f64 / 2.0 * LN_2PI;
    let mut df = vec![0.0; p];
    for i in 0..p {
        let di = (i + 1..p).filter(|&j| graph.has_edge(i, j)).count() as f64;
        let ki = (0..i).filter(|&j| graph.has_edge(j, i)).count() as f64;
        df[i] = nu + di;
        base += df[i] / 2.0 * std::f64::consts::LN_2 + ln_gamma(df[i] / 2.0) + (nu + di + ki) * t[(i, i)].ln();
    }
    let n_nonfree = graph.max_edges() - graph.edge_count();
    if n_nonfree == 0 || n_mc == 0 {
        return Ok(McEstimate {
            log_value: base,
            std_error: 0.0,
        });
    }
    let mut psi = DMatrix::zeros(p, p);
    let mut phi = DMatrix::zeros(p, p);
    let mut logs = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        for i in 0..p {
            psi[(i, i)] = chi_square(rng, df[i]).sqrt();
            for j in (i + 1)..p {
                if graph.has_edge(i, j) {
                    psi[(i, j)] = normal(rng);
                }
            }
        }
        let mut acc = 0.0;
        for i in 0..p {
            phi[(i, i)] = psi[(i, i)] * t[(i, i)];
            for j in (i + 1)..p {
                if graph.has_edge(i, j) {
                    let mut s = 0.0;
                    for k in i..=j {
                        s += psi[(i, k)] * t[(k, j)];
                    }
                    phi[(i, j)] = s;
                } else {
                    let mut s = 0.0;
                    for l in 0..i {
                        s += phi[(l, i)] * phi[(l, j)];
                    }
                    phi[(i, j)] = -s / phi[(i, i)];
                    let mut r = 0.0;
                    for k in i..j {
                        r += psi[(i, k)] * t[(k, j)];
                    }
                    psi[(i, j)] = (phi[(i, j)] - r) / t[(j, j)];
                    acc += psi[(i, j)] * psi[(i, j)];
                }
            }
        }
        logs.push(-0.5 * acc);
    }
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|x| (x - m).exp()).collect();
    let n = n_mc as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = if n_mc > 1 {
        w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        log_value: base + m + mean.ln(),
        std_error: var.sqrt() / (mean * n.sqrt()),
    })
}

/// Mode of `|K|^{(ν-2)/2} exp(-tr(DK)/2)` on the graph cone, by clique-wise IPS.
fn ips_mode(graph: &Graph, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    let cliques = graph.maximal_cliques();
    let mut k = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
    let max_iter = 100 * p.max(1);
    for _ in 0..max_iter {
        let prev = k.clone();
        for c in &cliques {
            let sigma = inv_spd(&k)?;
            let s_cc_inv = inv_spd(&submatrix(s, c, c))?;
            let sig_cc = submatrix(&sigma, c, c);
            let sig_cc_inv = inv_spd(&sig_cc)?;
            for (a, &i) in c.iter().enumerate() {
                for (b, &j) in c.iter().enumerate() {
                    k[(i, j)] += s_cc_inv[(a, b)] - sig_cc_inv[(a, b)];
                }
            }
            symmetrize(&mut k);
        }
        if max_abs_diff(&k, &prev) < IPS_TOL {
            return Ok(k);
        }
    }
    Err(Error::NoConvergence {
        what: "iterative proportional scaling",
        iterations: max_iter,
    })
}

/// Laplace approximation of `log I` around the IPS mode.
pub fn log_norm_const_laplace(graph: &Graph, d: &DMatrix<f64>, nu: f64) -> Result<f64> {
    if nu <= 2.0 {
        return Err(Error::Config(format!("laplace approximation needs nu > 2, got {nu}")));
    }
    let p = d.nrows();
    let s = d / (nu - 2.0);
    let k = ips_mode(graph, &s)?;
    let h = 0.5 * (nu - 2.0) * logdet_spd(&k)? - 0.5 * crate::linalg::frob_inner(d, &k);
    let sigma = inv_spd(&k)?;
    let mut free: Vec<(usize, usize)> = (0..p).map(|i| (i, i)).collect();
    free.extend(graph.edges());
    let nf = free.len();
    let pairs = |(a, b): (usize, usize)| -> Vec<(usize, usize)> {
        if a == b {
            vec![(a, a)]
        } else {
            vec![(a, b), (b, a)]
        }
    };
    let mut m = DMatrix::zeros(nf, nf);
    for e in 0..nf {
        for f in e..nf {
            let mut v = 0.0;
            for (r1, c1) in pairs(free[e]) {
                for (r2, c2) in pairs(free[f]) {
                    v += sigma[(c1, r2)] * sigma[(c2, r1)];
                }
            }
            m[(e, f)] = v;
            m[(f, e)] = v;
        }
    }
    let neg_h = m * (0.5 * (nu - 2.0));
    Ok(h + nf as f64 / 2.0 * LN_2PI - 0.5 * logdet_spd(&neg_h)?)
}

/// Exact `log I` for chordal graphs via the clique/separator factorization.
pub fn log_norm_const_decomposable(graph: &Graph, d: &DMatrix<f64>, nu: f64) -> Result<f64> {
    let (order, parents) = graph.mcs();
    let mut total = 0.0;
    for (v, pa) in order.iter().zip(parents.iter()) {
        if !graph.is_complete_on(pa) {
            return Err(Error::NonDecomposable);
        }
        let mut c = pa.clone();
        c.push(*v);
        total += log_norm_const_full(nu, &submatrix(d, &c, &c))?;
        if !pa.is_empty() {
            total -= log_norm_const_full(nu, &submatrix(d, pa, pa))?;
        }
    }
    Ok(total)
}

/// Counts of how each normalizing constant was obtained.
#[derive(Debug, Default)]
pub struct ConstCounters {
    pub closed_form: AtomicUsize,
    pub decomposable: AtomicUsize,
    pub monte_carlo: AtomicUsize,
    pub laplace: AtomicUsize,
    /// Prior-side constants whose Monte-Carlo error stayed too large and used Laplace instead.
    pub mc_fallback: AtomicUsize,
}

impl ConstCounters {
    /// Calls to an approximate estimator (Monte-Carlo or Laplace).
    pub fn estimator_calls(&self) -> usize {
        self.monte_carlo.load(Ordering::Relaxed) + self.laplace.load(Ordering::Relaxed)
    }
}

/// Target standard error of a Monte-Carlo `log I`.
pub const MC_TARGET_SE: f64 = 0.25;
/// Largest multiple of `n_mc` tried before falling back to Laplace.
pub const MC_MAX_GROWTH: usize = 4;

/// Picks the cheapest valid route for each normalizing constant.
///
/// Complete and edgeless graphs use closed forms, chordal graphs use the
/// clique factorization (unless disabled), prior-side constants otherwise use
/// Monte-Carlo and posterior-side constants use Laplace.
///
/// The Monte-Carlo sample grows fourfold until the standard error of `log I`
/// reaches [`MC_TARGET_SE`]; past `MC_MAX_GROWTH · n_mc` draws the Laplace value is used.
#[derive(Debug)]
pub struct NormConstRouter {
    pub use_decomposable: bool,
    pub n_mc: usize,
    pub counters: ConstCounters,
}

impl NormConstRouter {
    pub fn new(use_decomposable: bool, n_mc: usize) -> Self {
        Self {
            use_decomposable,
            n_mc,
            counters: ConstCounters::default(),
        }
    }

    fn exact(&self, graph: &Graph, d: &DMatrix<f64>, nu: f64) -> Result<Option<f64>> {
        if graph.is_full() {
            self.counters.closed_form.fetch_add(1, Ordering::Relaxed);
            return log_norm_const_full(nu, d).map(Some);
        }
        if graph.edge_count() == 0 {
            self.counters.closed_form.fetch_add(1, Ordering::Relaxed);
            return Ok(Some(log_norm_const_empty(nu, d)));
        }
        if self.use_decomposable && graph.is_decomposable() {
            self.counters.decomposable.fetch_add(1, Ordering::Relaxed);
            return log_norm_const_decomposable(graph, d, nu).map(Some);
        }
        Ok(None)
    }

    pub fn prior<R: Rng + ?Sized>(&self, rng: &mut R, graph: &Graph, d: &DMatrix<f64>, nu: f64) -> Result<f64> {
        if let Some(v) = self.exact(graph, d, nu)? {
            return Ok(v);
        }
        self.counters.monte_carlo.fetch_add(1, Ordering::Relaxed);
        let mut n = self.n_mc.max(2);
        loop {
            let est = log_norm_const_mc(rng, graph, d, nu, n)?;
            if est.std_error.is_finite() && est.std_error <= MC_TARGET_SE {
                return Ok(est.log_value);
            }
            if n >= self.n_mc.max(2) * MC_MAX_GROWTH {
                break;
            }
            n *= 4;
        }
        self.counters.mc_fallback.fetch_add(1, Ordering::Relaxed);
        self.counters.laplace.fetch_add(1, Ordering::Relaxed);
        log_norm_const_laplace(graph, d, nu)
    }

    pub fn posterior(&self, graph: &Graph, d: &DMatrix<f64>, nu: f64) -> Result<f64> {
        if let Some(v) = self.exact(graph, d, nu)? {
            return Ok(v);
        }
        self.counters.laplace.fetch_add(1, Ordering::Relaxed);
        log_norm_const_laplace(graph, d, nu)
    }
}
