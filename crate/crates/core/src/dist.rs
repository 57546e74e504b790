//! Scalar distributions and special functions used by the samplers.

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
pub use statrs::function::gamma::ln_gamma;

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Multivariate log-gamma `ln Γ_p(a)`.
pub fn ln_mvgamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * LN_PI + (0..p).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Gamma draw with shape/rate parameterization.
pub fn gamma_rate<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

pub fn chi_square<R: Rng + ?Sized>(rng: &mut R, df: f64) -> f64 {
    2.0 * gamma_rate(rng, df / 2.0, 1.0)
}

pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x: f64 = Beta::new(a, b).expect("positive beta parameters").sample(rng);
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Index drawn from unnormalized log weights.
pub fn categorical_log<R: Rng + ?Sized>(rng: &mut R, logw: &[f64]) -> usize {
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|x| (x - m).exp()).collect();
    categorical(rng, &w)
}

/// Index drawn from unnormalized nonnegative weights.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, w: &[f64]) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &x) in w.iter().enumerate() {
        if u < x {
            return i;
        }
        u -= x;
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
}

/// Standard normal truncated to `(a, b)`.
pub fn std_truncnorm<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    if b <= 0.0 {
        return -std_truncnorm(rng, -b, -a);
    }
    if a.is_infinite() && b.is_infinite() {
        return normal(rng);
    }
    if a >= 0.0 {
        // Entirely in the right half-line.
        if a > 2.0 && (b - a) > 2.0 / a {
            return tail_rejection(rng, a, b);
        }
        if b - a < 1.0 || a > 2.0 {
            return uniform_rejection(rng, a, b);
        }
        return inverse_cdf(rng, a, b);
    }
    // Interval straddles zero.
    if b - a < 2.0 {
        return uniform_rejection(rng, a, b);
    }
    inverse_cdf(rng, a, b)
}

fn inverse_cdf<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        let x = if a >= 0.0 {
            // Work with upper tails for accuracy.
            let sa = std_normal_sf(a);
            let sb = std_normal_sf(b);
            let s = sb + u * (sa - sb);
            -std_normal_quantile(s)
        } else {
            let fa = std_normal_cdf(a);
            let fb = std_normal_cdf(b);
            std_normal_quantile(fa + u * (fb - fa))
        };
        if x.is_finite() && x > a && x < b {
            return x;
        }
        if x.is_finite() && (x == a || x == b) {
            return x;
        }
    }
}

fn uniform_rejection<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    // Envelope is the density's maximum over the interval.
    let m = if a > 0.0 {
        a * a
    } else if b < 0.0 {
        b * b
    } else {
        0.0
    };
    loop {
        let x = a + (b - a) * rng.random::<f64>();
        let u: f64 = rng.random();
        if u.ln() <= 0.5 * (m - x * x) {
            return x;
        }
    }
}

fn tail_rejection<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let x = a + e / rate;
        if x >= b {
            continue;
        }
        let u: f64 = rng.random();
        if u.ln() <= -0.5 * (x - rate) * (x - rate) {
            return x;
        }
    }
}

/// Normal `N(mean, sd²)` truncated to `(lo, hi)`.
pub fn truncnorm<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let x = mean + sd * std_truncnorm(rng, a, b);
    x.clamp(lo, hi)
}

/// Mean of `N(mean, sd²)` truncated to `(lo, hi)`.
pub fn truncnorm_mean(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = std_normal_cdf(b) - std_normal_cdf(a);
    let pa = if a.is_finite() { std_normal_pdf(a) } else { 0.0 };
    let pb = if b.is_finite() { std_normal_pdf(b) } else { 0.0 };
    mean + sd * (pa - pb) / z
}

/// Variance of `N(mean, sd²)` truncated to `(lo, hi)`.
pub fn truncnorm_var(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let z = std_normal_cdf(b) - std_normal_cdf(a);
    let pa = if a.is_finite() { std_normal_pdf(a) } else { 0.0 };
    let pb = if b.is_finite() { std_normal_pdf(b) } else { 0.0 };
    let ta = if a.is_finite() { a * pa } else { 0.0 };
    let tb = if b.is_finite() { b * pb } else { 0.0 };
    let r = (pa - pb) / z;
    sd * sd * (1.0 + (ta - tb) / z - r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mvgamma_reduces_to_gamma() {
        assert!((ln_mvgamma(1, 3.5) - ln_gamma(3.5)).abs() < 1e-14);
        // Γ_2(a) = π^{1/2} Γ(a) Γ(a - 1/2)
        let a = 2.7;
        let expect = 0.5 * LN_PI + ln_gamma(a) + ln_gamma(a - 0.5);
        assert!((ln_mvgamma(2, a) - expect).abs() < 1e-13);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &x in &[-5.0, -1.3, 0.0, 0.4, 2.2, 6.0] {
            assert!((std_normal_quantile(std_normal_cdf(x)) - x).abs() < 1e-8);
        }
    }

    fn check_moments(lo: f64, hi: f64, mean: f64, sd: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| truncnorm(&mut rng, mean, sd, lo, hi)).collect();
        assert!(xs.iter().all(|&x| x >= lo && x <= hi));
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let em = truncnorm_mean(mean, sd, lo, hi);
        let ev = truncnorm_var(mean, sd, lo, hi);
        let se = (ev / n as f64).sqrt();
        assert!((m - em).abs() < 4.0 * se, "lo={lo} hi={hi}: {m} vs {em}");
        assert!((v - ev).abs() < 0.05 * ev + 1e-6, "lo={lo} hi={hi}: {v} vs {ev}");
    }

    #[test]
    fn truncnorm_moments_across_regimes() {
        check_moments(0.0, f64::INFINITY, -2.0, 1.0);
        check_moments(f64::NEG_INFINITY, 0.0, 3.0, 1.0);
        check_moments(1.0, 2.0, 0.0, 1.0);
        check_moments(-0.5, 0.5, 0.0, 2.0);
        check_moments(-3.0, 4.0, 0.5, 1.0);
        check_moments(5.0, 5.3, 0.0, 1.0);
        check_moments(f64::NEG_INFINITY, -4.0, 0.0, 1.0);
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let k = categorical(&mut rng, &[0.0, 1.0, 0.0, 2.0]);
            assert!(k == 1 || k == 3);
        }
    }
}
