use serde::{Deserialize, Serialize};

use super::spec::Kind;
use super::stream::DataStream;
use crate::error::{Error, Result};

/// Stream-wide Box-Cox parameters for one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxParams {
    pub lambda: f64,
    /// Added before transforming so every value is positive.
    pub shift: f64,
}

pub fn boxcox_transform(x: f64, p: BoxCoxParams) -> f64 {
    let y = x + p.shift;
    if p.lambda.abs() < 1e-12 {
        y.ln()
    } else {
        (y.powf(p.lambda) - 1.0) / p.lambda
    }
}

pub fn boxcox_inverse(z: f64, p: BoxCoxParams) -> f64 {
    let y = if p.lambda.abs() < 1e-12 {
        z.exp()
    } else {
        (p.lambda * z + 1.0).powf(1.0 / p.lambda)
    };
    y - p.shift
}

/// Guerrero's coefficient of variation of `s_h / m_h^{1-λ}` across groups.
pub fn guerrero_cv(groups: &[Vec<f64>], lambda: f64) -> f64 {
    let ratios: Vec<f64> = groups
        .iter()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let n = g.len() as f64;
            let m = g.iter().sum::<f64>() / n;
            let s = (g.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            s / m.powf(1.0 - lambda)
        })
        .collect();
    let k = ratios.len() as f64;
    if k < 2.0 {
        return f64::NAN;
    }
    let m = ratios.iter().sum::<f64>() / k;
    let s = (ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    s / m
}

fn choose_lambda(groups: &[Vec<f64>]) -> f64 {
    let f = |l: f64| guerrero_cv(groups, l);
    let grid: Vec<f64> = (0..=80).map(|i| -2.0 + 0.05 * i as f64).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(1.0);
    // Golden-section refinement around the best grid point.
    let (mut a, mut b) = ((best - 0.05).max(-2.0), (best + 0.05).min(2.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..60 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// Box-Cox transforms the selected continuous columns in place.
///
/// Returns one entry per selected column; `None` marks a skipped zero-variance column.
pub fn boxcox_preprocess(ds: &DataStream, vars: &[usize]) -> Result<(DataStream, Vec<Option<BoxCoxParams>>)> {
    let mut out = ds.clone();
    let mut params = Vec::with_capacity(vars.len());
    for &j in vars {
        let v = ds.variables.get(j).ok_or_else(|| Error::Invalid(format!("no variable {j}")))?;
        if v.kind != Kind::Continuous {
            return Err(Error::InvalidVariable {
                name: v.name.clone(),
                reason: "box-cox applies to continuous variables only".into(),
            });
        }
        let obs: Vec<f64> = ds.column(j).flatten().collect();
        let min = obs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if obs.is_empty() || min == max {
            log::warn!("skipping box-cox for zero-variance variable `{}`", v.name);
            params.push(None);
            continue;
        }
        let shift = if min <= 0.0 { 1.0 - min } else { 0.0 };
        let groups: Vec<Vec<f64>> = ds
            .days
            .iter()
            .map(|d| d.rows.iter().filter_map(|r| r[j]).map(|x| x + shift).collect())
            .collect();
        let lambda = choose_lambda(&groups);
        let p = BoxCoxParams { lambda, shift };
        for d in out.days.iter_mut() {
            for r in d.rows.iter_mut() {
                if let Some(x) = r[j] {
                    r[j] = Some(boxcox_transform(x, p));
                }
            }
        }
        let spec = &mut out.variables[j];
        spec.lower = f64::NEG_INFINITY;
        spec.upper = f64::INFINITY;
        params.push(Some(p));
    }
    Ok((out, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DayBatch, VariableSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn lognormal_stream(seed: u64) -> DataStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.4).unwrap();
        let days = (0..20)
            .map(|d| DayBatch {
                day: d + 1,
                rows: (0..200)
                    .map(|_| vec![Some((0.15 * d as f64 + n.sample(&mut rng)).exp())])
                    .collect(),
            })
            .collect();
        DataStream::new(vec![VariableSpec::continuous("x")], days).unwrap()
    }

    fn skewness(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let s2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n / s2.powf(1.5)
    }

    #[test]
    fn lognormal_gives_lambda_near_zero() {
        let ds = lognormal_stream(3);
        let (out, params) = boxcox_preprocess(&ds, &[0]).unwrap();
        let p = params[0].unwrap();
        assert!(p.lambda.abs() < 0.15, "lambda {}", p.lambda);
        // Oracle: plain grid search over [-2, 2] at 0.001 resolution.
        let groups: Vec<Vec<f64>> = ds.days.iter().map(|d| d.rows.iter().map(|r| r[0].unwrap()).collect()).collect();
        let grid_best = (0..=4000)
            .map(|i| -2.0 + 0.001 * i as f64)
            .min_by(|a, b| guerrero_cv(&groups, *a).total_cmp(&guerrero_cv(&groups, *b)))
            .unwrap();
        assert!((grid_best - p.lambda).abs() < 2e-3);
        let within: Vec<f64> = out.days[10].rows.iter().map(|r| r[0].unwrap()).collect();
        assert!(skewness(&within).abs() < 0.35);
    }

    #[test]
    fn shift_applied_to_non_positive_column() {
        let days = vec![
            DayBatch { day: 1, rows: vec![vec![Some(-2.0)], vec![Some(0.5)], vec![Some(1.0)]] },
            DayBatch { day: 2, rows: vec![vec![Some(-1.0)], vec![Some(3.0)], vec![Some(2.0)]] },
        ];
        let ds = DataStream::new(vec![VariableSpec::continuous("x")], days).unwrap();
        let (_, params) = boxcox_preprocess(&ds, &[0]).unwrap();
        assert_eq!(params[0].unwrap().shift, 3.0);
    }

    #[test]
    fn lambda_one_is_affine() {
        let p = BoxCoxParams { lambda: 1.0, shift: 0.0 };
        for &x in &[0.5, 2.0, 10.0] {
            assert!((boxcox_transform(x, p) - (x - 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_variance_is_skipped() {
        let days = vec![DayBatch { day: 1, rows: vec![vec![Some(2.0)], vec![Some(2.0)]] }];
        let ds = DataStream::new(vec![VariableSpec::continuous("x")], days).unwrap();
        let (out, params) = boxcox_preprocess(&ds, &[0]).unwrap();
        assert!(params[0].is_none());
        assert_eq!(out, ds);
    }

    proptest::proptest! {
        #[test]
        fn inverse_recovers_input(x in 0.01f64..1e3, lambda in -2.0f64..2.0, shift in 0.0f64..5.0) {
            let p = BoxCoxParams { lambda, shift };
            let back = boxcox_inverse(boxcox_transform(x, p), p);
            proptest::prop_assert!(((back - x) / x).abs() < 1e-8);
        }
    }
}
