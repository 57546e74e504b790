use serde::{Deserialize, Serialize};

/// Detection outcome of one method on one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    /// Every true change day flagged.
    pub detected: bool,
    pub false_positive_days: Vec<i64>,
    /// Candidate days scored for false positives.
    pub n_negative_days: usize,
    pub fpr: f64,
}

/// Scores per-day values (probability or 0/1 alarm of a change after each day) against truth.
///
/// A day counts as flagged when its value reaches `cutoff`. False positives are counted over
/// every day but the last, excluding true change days and the two days after each.
pub fn score(day_labels: &[i64], values: &[f64], truth: &[i64], cutoff: f64) -> BenchResult {
    let flagged = |k: usize| values[k] >= cutoff;
    let detected = truth
        .iter()
        .all(|d| day_labels.iter().position(|x| x == d).is_some_and(flagged));
    let excluded = |d: i64| truth.iter().any(|&c| d >= c && d <= c + 2);
    let candidates: Vec<usize> = (0..day_labels.len().saturating_sub(1))
        .filter(|&k| !excluded(day_labels[k]))
        .collect();
    let false_positive_days: Vec<i64> = candidates.iter().filter(|&&k| flagged(k)).map(|&k| day_labels[k]).collect();
    let fpr = if candidates.is_empty() {
        0.0
    } else {
        false_positive_days.len() as f64 / candidates.len() as f64
    };
    BenchResult {
        detected,
        false_positive_days,
        n_negative_days: candidates.len(),
        fpr,
    }
}

/// Converts alarm flags to 0/1 values for [`score`].
pub fn flags_to_values(flags: &[bool]) -> Vec<f64> {
    flags.iter().map(|&f| f as u8 as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn days() -> Vec<i64> {
        (1..=30).collect()
    }

    #[test]
    fn perfect_detector() {
        let mut v = vec![0.0; 30];
        v[13] = 1.0;
        let r = score(&days(), &v, &[14], 0.5);
        assert!(r.detected);
        assert_eq!(r.fpr, 0.0);
    }

    #[test]
    fn constant_alarm() {
        let r = score(&days(), &[1.0; 30], &[14], 0.5);
        assert!(r.detected);
        assert_eq!(r.n_negative_days, 26);
        assert_eq!(r.fpr, 1.0);
    }

    #[test]
    fn probability_above_cutoff() {
        let mut v = vec![0.0; 30];
        v[13] = 0.6;
        assert!(score(&days(), &v, &[14], 0.5).detected);
        v[13] = 0.4;
        assert!(!score(&days(), &v, &[14], 0.5).detected);
    }

    proptest! {
        #[test]
        fn invariant_to_monotone_rescaling(v in prop::collection::vec(0.0f64..1.0, 30), c in 0.05f64..0.95, k in 0.1f64..10.0) {
            let a = score(&days(), &v, &[14], c);
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let b = score(&days(), &scaled, &[14], c * k);
            prop_assert_eq!(a, b);
        }
    }
}
