use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::data::DataStream;
use crate::linalg::inv_spd;

/// Per-day output of the Hotelling T² scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ht2Scan {
    /// `flags[t]` is true when day `t + 1` alarms, i.e. a change after day `t`.
    pub flags: Vec<bool>,
    /// F statistic for each day (`NaN` where the test could not run).
    pub statistics: Vec<f64>,
    /// Rows discarded for missing cells, per day.
    pub dropped_rows: Vec<usize>,
}

fn complete_rows(ds: &DataStream, t: usize) -> Vec<Vec<f64>> {
    ds.days[t]
        .rows
        .iter()
        .filter_map(|r| r.iter().copied().collect::<Option<Vec<f64>>>())
        .collect()
}

fn mean_and_scatter(rows: &[Vec<f64>], p: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len() as f64;
    let mut m = DVector::zeros(p);
    for r in rows {
        m += DVector::from_column_slice(r);
    }
    m /= n;
    let mut s = DMatrix::zeros(p, p);
    for r in rows {
        let d = DVector::from_column_slice(r) - &m;
        s += &d * d.transpose();
    }
    (m, s)
}

/// Two-sample Hotelling T² of each day against the pooled trailing `window` days.
///
/// Rows with any missing cell are dropped. The pooled covariance gets a ridge of
/// `1e-6 · trace / p` when singular. An alarm on day `t` flags a change after day `t − 1`;
/// the last entry of `flags` is always false.
pub fn hotelling_t2_scan(ds: &DataStream, window: usize, alpha: f64) -> Ht2Scan {
    let t_days = ds.n_days();
    let p = ds.n_vars();
    let mut flags = vec![false; t_days];
    let mut statistics = vec![f64::NAN; t_days];
    let complete: Vec<Vec<Vec<f64>>> = (0..t_days).map(|t| complete_rows(ds, t)).collect();
    let dropped_rows = (0..t_days).map(|t| ds.days[t].n_rows() - complete[t].len()).collect();
    for t in window.max(1)..t_days {
        let reference: Vec<Vec<f64>> = complete[t - window..t].concat();
        let current = &complete[t];
        let (n1, n2) = (reference.len(), current.len());
        if n1 < 2 || n2 < 1 || n1 + n2 <= p + 1 {
            continue;
        }
        let (m1, s1) = mean_and_scatter(&reference, p);
        let (m2, s2) = mean_and_scatter(current, p);
        let mut pooled = (s1 + s2) / (n1 + n2 - 2) as f64;
        let inv = inv_spd(&pooled).or_else(|_| {
            let ridge = (pooled.trace() / p as f64).max(f64::MIN_POSITIVE) * 1e-6;
            for k in 0..p {
                pooled[(k, k)] += ridge;
            }
            inv_spd(&pooled)
        });
        let Ok(inv) = inv else { continue };
        let d = m2 - m1;
        let t2 = (n1 * n2) as f64 / (n1 + n2) as f64 * (d.transpose() * inv * &d)[(0, 0)];
        let df2 = (n1 + n2 - p - 1) as f64;
        let f = df2 / (p as f64 * (n1 + n2 - 2) as f64) * t2;
        let limit = FisherSnedecor::new(p as f64, df2).expect("positive degrees of freedom").inverse_cdf(1.0 - alpha);
        statistics[t] = f;
        flags[t - 1] = f > limit;
    }
    Ht2Scan {
        flags,
        statistics,
        dropped_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Scenario, ScenarioSpec};

    #[test]
    fn null_alarm_rate_matches_alpha() {
        // 200 replications × 26 testable days
        let mut alarms = 0usize;
        let mut tests = 0usize;
        for seed in 0..200 {
            let s = ScenarioSpec {
                seed,
                obs_per_day: 50,
                mean_shift: [0.0, 0.0],
                ..ScenarioSpec::new(Scenario::B)
            };
            let scan = hotelling_t2_scan(&s.generate().unwrap().data, 3, 0.005);
            for t in 3..30 {
                if scan.statistics[t].is_finite() {
                    tests += 1;
                    alarms += scan.flags[t - 1] as usize;
                }
            }
        }
        let rate = alarms as f64 / tests as f64;
        let se = (0.005 * 0.995 / tests as f64).sqrt();
        assert!((rate - 0.005).abs() < 3.0 * se, "rate {rate} over {tests}");
    }

    #[test]
    fn large_mean_shift_alarms() {
        let mut hits = 0;
        for seed in 0..40 {
            let s = ScenarioSpec {
                seed,
                obs_per_day: 50,
                mean_shift: [3.0, 3.0],
                ..ScenarioSpec::new(Scenario::B)
            };
            hits += hotelling_t2_scan(&s.generate().unwrap().data, 3, 0.005).flags[13] as usize;
        }
        assert!(hits as f64 >= 0.95 * 40.0, "{hits}/40");
    }

    #[test]
    fn missing_rows_are_dropped_and_counted() {
        let s = ScenarioSpec {
            seed: 1,
            ..ScenarioSpec::desk(Scenario::D)
        };
        let d = s.generate().unwrap().data;
        let scan = hotelling_t2_scan(&d, 3, 0.005);
        for (t, day) in d.days.iter().enumerate() {
            let incomplete = day.rows.iter().filter(|r| r.iter().any(|x| x.is_none())).count();
            assert_eq!(scan.dropped_rows[t], incomplete);
        }
        assert!(!scan.flags[29]);
    }
}
