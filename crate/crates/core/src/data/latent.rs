use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::spec::{Kind, VariableSpec};
use super::stream::DataStream;

/// Column blocks of the latent matrix: variable `j` owns `offsets[j]..offsets[j+1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentLayout {
    pub offsets: Vec<usize>,
}

impl LatentLayout {
    pub fn new(vars: &[VariableSpec]) -> Self {
        let mut offsets = vec![0];
        for v in vars {
            offsets.push(offsets.last().unwrap() + v.latent_width());
        }
        Self { offsets }
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_vars(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn block(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }
}

/// How one observed cell constrains its latent value(s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    /// Continuous value observed strictly inside its bounds.
    Fixed,
    Missing,
    /// Latent value confined to the interval.
    Interval { lo: f64, hi: f64 },
    /// Nominal level index that must hold the block's argmax.
    Argmax(usize),
}

/// Latent Gaussian data, stored row-major with rows grouped by day.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub layout: LatentLayout,
    pub values: Vec<f64>,
    /// Row ranges per day: day `t` owns `day_offsets[t]..day_offsets[t+1]`.
    pub day_offsets: Vec<usize>,
    /// Row-major `n_rows × n_vars` constraint table.
    pub cells: Vec<Cell>,
    /// Rows with at least one non-fixed cell.
    pub active_rows: Vec<usize>,
}

impl LatentMatrix {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.dim().max(1)
    }

    pub fn n_days(&self) -> usize {
        self.day_offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let p = self.dim();
        &mut self.values[i * p..(i + 1) * p]
    }

    pub fn cell(&self, i: usize, j: usize) -> Cell {
        self.cells[i * self.layout.n_vars() + j]
    }

    /// Row range covering days `first..=last` (0-based day positions).
    pub fn rows_of_days(&self, first: usize, last: usize) -> Range<usize> {
        self.day_offsets[first]..self.day_offsets[last + 1]
    }

    pub fn rows_slice(&self, rows: Range<usize>) -> &[f64] {
        let p = self.dim();
        &self.values[rows.start * p..rows.end * p]
    }
}

fn interval_for(v: &VariableSpec, x: f64) -> Cell {
    match v.kind {
        Kind::Continuous => {
            if v.lower.is_finite() && x <= v.lower {
                Cell::Interval { lo: f64::NEG_INFINITY, hi: v.lower }
            } else if v.upper.is_finite() && x >= v.upper {
                Cell::Interval { lo: v.upper, hi: f64::INFINITY }
            } else {
                Cell::Fixed
            }
        }
        Kind::Binary => {
            if v.level_index(x) == Some(0) {
                Cell::Interval { lo: f64::NEG_INFINITY, hi: 0.0 }
            } else {
                Cell::Interval { lo: 0.0, hi: f64::INFINITY }
            }
        }
        Kind::Ordinal => {
            let l = v.level_index(x).expect("validated level");
            let big_l = v.levels.len();
            let lo = if l == 0 { f64::NEG_INFINITY } else { v.levels[l - 1] };
            let hi = if l + 1 == big_l { f64::INFINITY } else { v.levels[l] };
            Cell::Interval { lo, hi }
        }
        Kind::Nominal => Cell::Argmax(v.level_index(x).expect("validated level")),
    }
}

fn interval_start(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (false, true) => hi - 1.0,
        (true, false) => lo + 1.0,
        (false, false) => 0.0,
    }
}

/// Deterministic starting latent values consistent with every observation.
pub fn init_latent(ds: &DataStream) -> LatentMatrix {
    let layout = LatentLayout::new(&ds.variables);
    let p = layout.dim();
    let j = ds.n_vars();
    let n = ds.n_rows();
    let mut values = vec![0.0; n * p];
    let mut cells = Vec::with_capacity(n * j);
    let mut day_offsets = vec![0];
    let mut i = 0;
    for d in &ds.days {
        for row in &d.rows {
            for (k, v) in ds.variables.iter().enumerate() {
                let block = layout.block(k);
                let cell = match row[k] {
                    None => Cell::Missing,
                    Some(x) => interval_for(v, x),
                };
                match cell {
                    Cell::Fixed => values[i * p + block.start] = row[k].unwrap(),
                    Cell::Interval { lo, hi } => {
                        values[i * p + block.start] = match v.kind {
                            Kind::Binary if hi == 0.0 => -0.5,
                            Kind::Binary => 0.5,
                            Kind::Ordinal => interval_start(lo, hi),
                            _ => row[k].unwrap(),
                        }
                    }
                    Cell::Argmax(l) => values[i * p + block.start + l] = 1.0,
                    Cell::Missing => {}
                }
                cells.push(cell);
            }
            i += 1;
        }
        day_offsets.push(i);
    }
    // Missing cells start at the mean of the initialized observed values.
    for (k, _) in ds.variables.iter().enumerate() {
        let block = layout.block(k);
        let mut sums = vec![0.0; block.len()];
        let mut count = 0usize;
        for r in 0..n {
            if cells[r * j + k] != Cell::Missing {
                for (s, c) in sums.iter_mut().zip(block.clone()) {
                    *s += values[r * p + c];
                }
                count += 1;
            }
        }
        if count > 0 {
            for s in sums.iter_mut() {
                *s /= count as f64;
            }
        }
        for r in 0..n {
            if cells[r * j + k] == Cell::Missing {
                for (s, c) in sums.iter().zip(block.clone()) {
                    values[r * p + c] = *s;
                }
            }
        }
    }
    let active_rows = (0..n)
        .filter(|&r| cells[r * j..(r + 1) * j].iter().any(|c| *c != Cell::Fixed))
        .collect();
    LatentMatrix {
        layout,
        values,
        day_offsets,
        cells,
        active_rows,
    }
}

/// Maps one latent row back to observation space.
pub fn decode_row(vars: &[VariableSpec], layout: &LatentLayout, z: &[f64]) -> Vec<f64> {
    vars.iter()
        .enumerate()
        .map(|(k, v)| {
            let b = layout.block(k);
            match v.kind {
                Kind::Continuous => z[b.start].clamp(v.lower, v.upper),
                Kind::Binary => {
                    if z[b.start] > 0.0 {
                        v.levels[1]
                    } else {
                        v.levels[0]
                    }
                }
                Kind::Ordinal => {
                    let x = z[b.start];
                    let l = v.levels[..v.levels.len() - 1].iter().take_while(|&&a| x > a).count();
                    v.levels[l]
                }
                Kind::Nominal => {
                    let blk = &z[b];
                    let l = (0..blk.len()).max_by(|&a, &c| blk[a].total_cmp(&blk[c])).unwrap();
                    v.levels[l]
                }
            }
        })
        .collect()
}
