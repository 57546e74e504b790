//! Cutoff calibration by refitting data simulated from the fitted model.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{decode_row, init_latent, DataStream, DayBatch, LatentLayout};
use crate::dist::{categorical, normal};
use crate::error::{Error, Result};
use crate::linalg::{chol_upper, mvn_from_precision_chol};
use crate::mixture::stick_weights;
use crate::pipeline::{fit, prepare_stream};
use crate::sampler::{PosteriorLog, Sampler, SamplerConfig};
use crate::sim::score;

/// Outcome of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cutoff: f64,
    pub fpr_target: f64,
    /// Mean false-positive rate over the calibration datasets at `cutoff`.
    pub achieved_fpr: f64,
    /// Fraction of calibration datasets with every change day of the MAP regime vector flagged.
    pub detection_rate: f64,
    pub n_cal: usize,
    pub seed: u64,
    pub dataset_seeds: Vec<u64>,
    /// Day labels after which the MAP regime vector changes.
    pub map_change_days: Vec<i64>,
    /// Change-point probabilities of each refitted dataset.
    pub probs: Vec<Vec<f64>>,
}

/// Day labels followed by a regime change in `phi`.
pub fn change_days(phi: &[usize], day_labels: &[i64]) -> Vec<i64> {
    (0..phi.len().saturating_sub(1))
        .filter(|&k| phi[k + 1] != phi[k])
        .map(|k| day_labels[k])
        .collect()
}

/// Smallest cutoff whose mean false-positive rate over `probs` is at most `fpr_target`.
///
/// Candidates are 0 and the next float above each observed value, so the result can exceed 1
/// when a negative day has probability 1 in every run.
pub fn select_cutoff(day_labels: &[i64], probs: &[Vec<f64>], truth: &[i64], fpr_target: f64) -> f64 {
    let mean_fpr = |c: f64| {
        probs.iter().map(|p| score(day_labels, p, truth, c).fpr).sum::<f64>() / probs.len().max(1) as f64
    };
    let mut candidates: Vec<f64> = probs.iter().flatten().map(|v| v.next_up()).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates
        .into_iter()
        .find(|&c| mean_fpr(c) <= fpr_target)
        .unwrap_or(f64::INFINITY)
}

/// Draws one dataset shaped like `original` from the sampler's current parameters.
fn simulate_like<R: Rng + ?Sized>(
    rng: &mut R,
    sampler: &Sampler,
    prepared: &DataStream,
    original: &DataStream,
) -> Result<DataStream> {
    let s = &sampler.state;
    let layout = LatentLayout::new(&prepared.variables);
    let p = s.dim();
    let mut factors = Vec::with_capacity(s.params.len());
    for rp in &s.params {
        factors.push(rp.lambda.iter().map(chol_upper).collect::<Result<Vec<_>>>()?);
    }
    let weights: Vec<Vec<f64>> = s.sticks.iter().map(|st| stick_weights(st)).collect();
    let index_of = |name: &str| prepared.variables.iter().position(|v| v.name == name);
    // original column -> (prepared column, prepared indicator column)
    let columns: Vec<(Option<usize>, Option<usize>)> = original
        .variables
        .iter()
        .map(|v| {
            let ind = prepared
                .variables
                .iter()
                .position(|w| w.indicator_of.as_deref() == Some(v.name.as_str()));
            (index_of(&v.name), ind)
        })
        .collect();
    // dropped variables are constant where observed
    let constants: Vec<Option<f64>> = (0..original.n_vars()).map(|k| original.column(k).flatten().next()).collect();
    let days = original
        .days
        .iter()
        .enumerate()
        .map(|(t, day)| {
            let r = s.phi[t];
            let rows = (0..day.rows.len())
                .map(|_| {
                    let k = categorical(rng, &weights[r]);
                    let eps = DVector::from_fn(p, |_, _| normal(rng));
                    let z = mvn_from_precision_chol(&s.params[r].mu[k], &factors[r][k], eps);
                    let x = decode_row(&prepared.variables, &layout, z.as_slice());
                    columns
                        .iter()
                        .zip(&constants)
                        .map(|(&(col, ind), c)| {
                            if ind.is_some_and(|i| x[i] == 1.0) {
                                return None;
                            }
                            match col {
                                Some(i) => Some(x[i]),
                                None => *c,
                            }
                        })
                        .collect()
                })
                .collect();
            DayBatch { day: day.day, rows }
        })
        .collect();
    DataStream::new(original.variables.clone(), days)
}

/// Calibrates the detection cutoff for a fitted stream.
///
/// Holds the MAP regime vector fixed, draws `n_cal` datasets from successive posterior draws of
/// the regime parameters, refits each with the same configuration and returns the smallest
/// cutoff whose mean false-positive rate against the MAP change days is at most `fpr_target`.
/// Each refit costs as much as the original fit.
pub fn calibrate(
    data: &DataStream,
    log: &PosteriorLog,
    config: &SamplerConfig,
    n_cal: usize,
    fpr_target: f64,
    seed: u64,
) -> Result<Calibration> {
    if n_cal == 0 {
        return Err(Error::Config("n_cal must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&fpr_target) {
        return Err(Error::Config(format!("fpr_target must lie in [0, 1], got {fpr_target}")));
    }
    let map = log
        .map_phi()
        .ok_or_else(|| Error::Invalid("posterior log has no post-burn-in draws".into()))?;
    let (prepared, _) = prepare_stream(data);
    if prepared.n_days() != map.len() {
        return Err(Error::Invalid(format!(
            "data has {} days, posterior log has {}",
            prepared.n_days(),
            map.len()
        )));
    }
    log::warn!("calibration refits the model {n_cal} times; expect about {n_cal}x the cost of one fit");
    let truth = change_days(&map, &log.day_labels);
    let dataset_seeds: Vec<u64> = (0..n_cal as u64).map(|i| seed.wrapping_add(1 + i)).collect();

    let mut cond = config.clone();
    cond.seed = seed;
    let mut sampler = Sampler::new(init_latent(&prepared), cond)?;
    if map.iter().any(|&r| r >= sampler.state.params.len()) {
        return Err(Error::Invalid("MAP regime vector exceeds the configured number of regimes".into()));
    }
    sampler.fix_phi = true;
    sampler.state.phi = map.clone();
    for _ in 0..config.burn_in().max(1) {
        sampler.sweep()?;
    }
    let mut datasets = Vec::with_capacity(n_cal);
    for &ds_seed in &dataset_seeds {
        for _ in 0..config.snapshot_stride.max(1) {
            sampler.sweep()?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(ds_seed);
        datasets.push(simulate_like(&mut rng, &sampler, &prepared, data)?);
    }

    let probs: Vec<Vec<f64>> = datasets
        .par_iter()
        .zip(&dataset_seeds)
        .map(|(ds, &s)| {
            let mut cfg = config.clone();
            cfg.seed = s;
            Ok(fit(ds, &cfg)?.changepoint_probs())
        })
        .collect::<Result<_>>()?;
    let labels = &log.day_labels;
    let cutoff = select_cutoff(labels, &probs, &truth, fpr_target);
    let scores: Vec<_> = probs.iter().map(|p| score(labels, p, &truth, cutoff)).collect();
    Ok(Calibration {
        cutoff,
        fpr_target,
        achieved_fpr: scores.iter().map(|s| s.fpr).sum::<f64>() / n_cal as f64,
        detection_rate: scores.iter().filter(|s| s.detected).count() as f64 / n_cal as f64,
        n_cal,
        seed,
        dataset_seeds,
        map_change_days: truth,
        probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::chain::tests::gaussian_stream;

    #[test]
    fn change_days_from_labels() {
        assert_eq!(change_days(&[0, 0, 1, 1, 2], &[5, 6, 7, 8, 9]), vec![6, 8]);
        assert!(change_days(&[0, 0], &[1, 2]).is_empty());
    }

    #[test]
    fn cutoff_selection() {
        let labels: Vec<i64> = (1..=6).collect();
        let probs = vec![vec![0.1, 0.4, 0.9, 0.0, 0.2, 0.0], vec![0.0, 0.3, 1.0, 0.0, 0.0, 0.0]];
        // truth after day 3 leaves days 1 and 2 as negatives
        assert_eq!(select_cutoff(&labels, &probs, &[3], 1.0), 0.0);
        let c = select_cutoff(&labels, &probs, &[3], 0.0);
        assert!(c > 0.4 && c < 0.41);
        let c = select_cutoff(&labels, &probs, &[3], 0.5);
        assert!(c > 0.1 && c <= 0.3 + 1e-12, "{c}");
    }

    #[test]
    fn calibrate_records_seeds_and_target_one_gives_zero() {
        let ds = gaussian_stream(4, 15, 2, |t| if t >= 2 { 3.0 } else { 0.0 }, 3);
        let cfg = SamplerConfig {
            n_iterations: 60,
            components: 1,
            seed: 5,
            ..Default::default()
        };
        let log = fit(&ds, &cfg).unwrap();
        let cal = calibrate(&ds, &log, &cfg, 2, 1.0, 77).unwrap();
        assert_eq!(cal.cutoff, 0.0);
        assert_eq!(cal.dataset_seeds, vec![78, 79]);
        assert_eq!(cal.probs.len(), 2);
        assert_eq!(cal.map_change_days, vec![2]);
        let again = calibrate(&ds, &log, &cfg, 2, 1.0, 77).unwrap();
        assert_eq!(cal, again);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = gaussian_stream(3, 5, 1, |_| 0.0, 1);
        let cfg = SamplerConfig {
            n_iterations: 10,
            components: 1,
            ..Default::default()
        };
        let log = fit(&ds, &cfg).unwrap();
        assert!(calibrate(&ds, &log, &cfg, 0, 0.1, 0).is_err());
        assert!(calibrate(&ds, &log, &cfg, 1, 1.5, 0).is_err());
    }
}
