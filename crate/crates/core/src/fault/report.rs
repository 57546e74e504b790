use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hellinger::hellinger;
use super::measure::MixtureMeasure;
use crate::data::LatentLayout;
use crate::error::{Error, Result};
use crate::rng::{Purpose, Streams};
use crate::sampler::PosteriorLog;

/// Distances below this are treated as "no detectable change".
pub const MIN_DISTANCE: f64 = 1e-6;

fn h<R: Rng + Clone>(q1: &MixtureMeasure, q2: &MixtureMeasure, n_mc: usize, rng: &R) -> Result<f64> {
    if q1.dim() == 0 {
        return Ok(0.0);
    }
    // every distance of one pair reuses the same draws
    hellinger(q1, q2, n_mc, &mut rng.clone())
}

fn complement(dim: usize, block: &[usize]) -> Vec<usize> {
    (0..dim).filter(|i| !block.contains(i)).collect()
}

/// `1 − H(Q_b without block, Q_a without block) / H(Q_b, Q_a)`; `None` when the pair does not differ.
pub fn total_effect_loss<R: Rng + Clone>(
    before: &MixtureMeasure,
    after: &MixtureMeasure,
    block: &[usize],
    n_mc: usize,
    rng: &R,
) -> Result<Option<f64>> {
    let d = h(before, after, n_mc, rng)?;
    if d < MIN_DISTANCE {
        return Ok(None);
    }
    let keep = complement(before.dim(), block);
    Ok(Some(1.0 - h(&before.select(&keep), &after.select(&keep), n_mc, rng)? / d))
}

/// `H(Q_b on block, Q_a on block) / H(Q_b, Q_a)`; `None` when the pair does not differ.
pub fn first_order_loss<R: Rng + Clone>(
    before: &MixtureMeasure,
    after: &MixtureMeasure,
    block: &[usize],
    n_mc: usize,
    rng: &R,
) -> Result<Option<f64>> {
    let d = h(before, after, n_mc, rng)?;
    if d < MIN_DISTANCE {
        return Ok(None);
    }
    Ok(Some(h(&before.select(block), &after.select(block), n_mc, rng)? / d))
}

/// Losses of every variable for one snapshot pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLosses {
    pub iteration: usize,
    pub distance: f64,
    pub total_effect: Vec<Option<f64>>,
    pub first_order: Vec<Option<f64>>,
}

/// Per-variable losses; `blocks[j]` lists the latent coordinates of variable `j`.
pub fn pair_losses<R: Rng + Clone>(
    before: &MixtureMeasure,
    after: &MixtureMeasure,
    blocks: &[Vec<usize>],
    n_mc: usize,
    rng: &R,
) -> Result<(f64, Vec<Option<f64>>, Vec<Option<f64>>)> {
    let d = h(before, after, n_mc, rng)?;
    if d < MIN_DISTANCE {
        return Ok((d, vec![None; blocks.len()], vec![None; blocks.len()]));
    }
    let mut te = Vec::with_capacity(blocks.len());
    let mut fo = Vec::with_capacity(blocks.len());
    for b in blocks {
        let keep = complement(before.dim(), b);
        te.push(Some(1.0 - h(&before.select(&keep), &after.select(&keep), n_mc, rng)? / d));
        fo.push(Some(h(&before.select(b), &after.select(b), n_mc, rng)? / d));
    }
    Ok((d, te, fo))
}

/// Indices ordered by decreasing value; missing values last, ties by index.
pub fn rank_desc(values: &[Option<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| match (values[a], values[b]) {
        (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    idx
}

fn mean_of(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub variable: String,
    pub mean_total_effect: Option<f64>,
    pub mean_first_order: Option<f64>,
    /// Snapshots with a defined loss.
    pub n_valid: usize,
}

/// Loss distributions and rankings for one change-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub changepoint_day: i64,
    pub n_mc: usize,
    pub seed: u64,
    pub variables: Vec<String>,
    pub snapshots: Vec<PairLosses>,
    pub summary: Vec<VariableSummary>,
    /// Headline ranking by mean First-Order loss.
    pub ranking: Vec<String>,
    pub ranking_total_effect: Vec<String>,
    /// Snapshots whose pair showed no detectable change.
    pub no_change_snapshots: usize,
}

impl FaultReport {
    /// Variable names ordered by mean Total-Effect loss.
    pub fn total_effect_order(&self) -> &[String] {
        &self.ranking_total_effect
    }
}

/// Computes Total-Effect and First-Order losses for every snapshot spanning a change after `day`.
pub fn fault_report(log: &PosteriorLog, day: i64, n_mc: usize, seed: u64) -> Result<FaultReport> {
    let snaps = log.snapshots_around(day);
    if snaps.is_empty() {
        return Err(Error::NoSnapshots(day));
    }
    let layout = LatentLayout::new(&log.variables);
    let blocks: Vec<Vec<usize>> = (0..layout.n_vars()).map(|j| layout.block(j).collect()).collect();
    let streams = Streams::new(seed);
    let snapshots = snaps
        .par_iter()
        .map(|s| {
            let (b, a) = s.around(day).expect("filtered above");
            let qb = MixtureMeasure::from_snapshot(b)?;
            let qa = MixtureMeasure::from_snapshot(a)?;
            if qb.dim() != layout.dim() || qa.dim() != layout.dim() {
                return Err(Error::Invalid(format!(
                    "snapshot {} has dimension {} but the variables need {}",
                    s.iteration,
                    qb.dim(),
                    layout.dim()
                )));
            }
            let rng = streams.stream(s.iteration as u64, Purpose::Fault, 0);
            let (distance, total_effect, first_order) = pair_losses(&qb, &qa, &blocks, n_mc, &rng)?;
            Ok(PairLosses {
                iteration: s.iteration,
                distance,
                total_effect,
                first_order,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = log.variables.iter().map(|v| v.name.clone()).collect();
    let summary: Vec<VariableSummary> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let te: Vec<Option<f64>> = snapshots.iter().map(|s| s.total_effect[j]).collect();
            let fo: Vec<Option<f64>> = snapshots.iter().map(|s| s.first_order[j]).collect();
            VariableSummary {
                variable: name.clone(),
                mean_total_effect: mean_of(&te),
                mean_first_order: mean_of(&fo),
                n_valid: te.iter().flatten().count(),
            }
        })
        .collect();
    let by = |f: fn(&VariableSummary) -> Option<f64>| -> Vec<String> {
        let vals: Vec<Option<f64>> = summary.iter().map(f).collect();
        rank_desc(&vals).into_iter().map(|j| names[j].clone()).collect()
    };
    let ranking = by(|s| s.mean_first_order);
    let ranking_total_effect = by(|s| s.mean_total_effect);
    Ok(FaultReport {
        changepoint_day: day,
        n_mc,
        seed,
        no_change_snapshots: snapshots.iter().filter(|s| s.distance < MIN_DISTANCE).count(),
        variables: names,
        snapshots,
        summary,
        ranking,
        ranking_total_effect,
    })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    changepoint_day: i64,
    n_mc: usize,
    seed: u64,
    n_snapshots: usize,
    no_change_snapshots: usize,
    ranking: &'a [String],
    ranking_total_effect: &'a [String],
    summary: &'a [VariableSummary],
}

/// Writes `fault_report.json`, `fault_losses.csv` and `daily_means.csv` into `dir`.
pub fn write_fault_outputs(dir: &Path, report: &FaultReport, log: &PosteriorLog) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = ReportFile {
        changepoint_day: report.changepoint_day,
        n_mc: report.n_mc,
        seed: report.seed,
        n_snapshots: report.snapshots.len(),
        no_change_snapshots: report.no_change_snapshots,
        ranking: &report.ranking,
        ranking_total_effect: &report.ranking_total_effect,
        summary: &report.summary,
    };
    let path = dir.join("fault_report.json");
    fs::write(&path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("fault_losses.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["iteration", "variable", "metric", "value"])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in &report.snapshots {
        for (j, name) in report.variables.iter().enumerate() {
            let it = s.iteration.to_string();
            w.write_record([it.as_str(), name, "total_effect", &fmt(s.total_effect[j])])?;
            w.write_record([it.as_str(), name, "first_order", &fmt(s.first_order[j])])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("daily_means.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["day".to_string()];
    header.extend(log.variables.iter().map(|v| v.name.clone()));
    w.write_record(&header)?;
    for (d, row) in log.day_labels.iter().zip(&log.meta.daily_means) {
        let mut rec = vec![d.to_string()];
        rec.extend(row.iter().map(|v| fmt(*v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}
