use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataStream, DayBatch, VariableSpec};
use crate::dist::{normal, std_normal_quantile};
use crate::error::{Error, Result};
use crate::gwishart::sample_wishart;
use crate::linalg::inv_spd;
use crate::rng::{Purpose, Streams};

/// The eight simulated change types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Continuous, unimodal, spread change.
    A,
    /// Continuous, unimodal, mean change.
    B,
    /// Continuous, bimodal, modes move while pooled moments stay fixed.
    C,
    /// Continuous with missing values, missing rate change.
    D,
    /// Continuous with missing values, missingness pattern change.
    E,
    /// Mixed types, bimodal, missing values, spread change.
    F,
    /// Mixed types, unimodal, missing values, spread change.
    G,
    /// Mixed types, unimodal, missing values, mean change.
    H,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::A,
        Scenario::B,
        Scenario::C,
        Scenario::D,
        Scenario::E,
        Scenario::F,
        Scenario::G,
        Scenario::H,
    ];

    fn bimodal(self) -> bool {
        matches!(self, Scenario::C | Scenario::F)
    }

    fn mixed(self) -> bool {
        matches!(self, Scenario::F | Scenario::G | Scenario::H)
    }

    fn has_missing(self) -> bool {
        matches!(self, Scenario::D | Scenario::E | Scenario::F | Scenario::G | Scenario::H)
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "C" => Ok(Scenario::C),
            "D" => Ok(Scenario::D),
            "E" => Ok(Scenario::E),
            "F" => Ok(Scenario::F),
            "G" => Ok(Scenario::G),
            "H" => Ok(Scenario::H),
            other => Err(Error::Config(format!("unknown scenario `{other}` (expected A-H)"))),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Generator settings. Effect sizes are artifact defaults, all configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    #[serde(default = "d_vars")]
    pub n_vars: usize,
    #[serde(default = "d_days")]
    pub n_days: usize,
    #[serde(default = "d_obs")]
    pub obs_per_day: usize,
    /// Last day (1-based label) of the first regime.
    #[serde(default = "d_change")]
    pub change_day: usize,
    /// Mean shifts in standard deviations for the two changed variables.
    #[serde(default = "d_shift")]
    pub mean_shift: [f64; 2],
    /// Standard-deviation multipliers for the two changed variables.
    #[serde(default = "d_scale")]
    pub scale: [f64; 2],
    /// Mode offset for bimodal data, in standard deviations.
    #[serde(default = "d_sep")]
    pub mode_separation: f64,
    /// 1-based indices of the two variables that change.
    #[serde(default = "d_changed")]
    pub changed_vars: [usize; 2],
    /// Correlation decay of the base covariance, `Σ_ij = ρ^|i−j|` within the changed pair
    /// and within the remaining variables; the two groups are uncorrelated so only the
    /// changed variables carry the regime change.
    #[serde(default = "d_corr")]
    pub correlation: f64,
    #[serde(default = "d_miss")]
    pub missing_rate: f64,
    /// Missing rate of the changed variables after the change (missing-rate scenario).
    #[serde(default = "d_miss_post")]
    pub post_missing_rate: f64,
    /// Degrees of freedom of the inverse-Wishart resample (missingness-pattern scenario).
    #[serde(default = "d_iw")]
    pub iw_df: f64,
    #[serde(default)]
    pub seed: u64,
}

fn d_vars() -> usize {
    10
}
fn d_days() -> usize {
    30
}
fn d_obs() -> usize {
    200
}
fn d_change() -> usize {
    14
}
fn d_shift() -> [f64; 2] {
    [0.5, 1.0]
}
fn d_scale() -> [f64; 2] {
    [1.5, 2.0]
}
fn d_sep() -> f64 {
    1.5
}
fn d_changed() -> [usize; 2] {
    [3, 4]
}
fn d_corr() -> f64 {
    0.3
}
fn d_miss() -> f64 {
    0.1
}
fn d_miss_post() -> f64 {
    0.3
}
fn d_iw() -> f64 {
    12.0
}

/// A generated stream with its true change days (label of the last day before each change).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: DataStream,
    pub truth: Vec<i64>,
}

impl ScenarioSpec {
    /// Full-size defaults: 10 variables, 30 days of 200 rows, change after day 14.
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            n_vars: d_vars(),
            n_days: d_days(),
            obs_per_day: d_obs(),
            change_day: d_change(),
            mean_shift: d_shift(),
            scale: d_scale(),
            mode_separation: d_sep(),
            changed_vars: d_changed(),
            correlation: d_corr(),
            missing_rate: d_miss(),
            post_missing_rate: d_miss_post(),
            iw_df: d_iw(),
            seed: 0,
        }
    }

    /// Desk scale: 50 rows per day.
    pub fn desk(scenario: Scenario) -> Self {
        Self {
            obs_per_day: 50,
            ..Self::new(scenario)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_days < 2 || self.change_day < 1 || self.change_day >= self.n_days {
            return bad(format!("change_day must lie in [1, {}]", self.n_days.saturating_sub(1)));
        }
        if self.obs_per_day == 0 {
            return bad("obs_per_day must be positive".into());
        }
        let [a, b] = self.changed_vars;
        if a == 0 || b == 0 || a == b || a > self.n_vars || b > self.n_vars {
            return bad("changed_vars must be two distinct 1-based variable indices".into());
        }
        if self.scenario.mixed() && self.n_vars < 5 {
            return bad("mixed-type scenarios need at least 5 variables".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) || !(0.0..1.0).contains(&self.post_missing_rate) {
            return bad("missing rates must lie in [0, 1)".into());
        }
        if self.correlation.abs() >= 1.0 {
            return bad("correlation must lie in (-1, 1)".into());
        }
        if self.iw_df <= 3.0 {
            return bad("iw_df must exceed 3".into());
        }
        Ok(())
    }

    fn base_cov(&self) -> DMatrix<f64> {
        let changed = self.changed_idx();
        let group = |k: usize| changed.contains(&k);
        DMatrix::from_fn(self.n_vars, self.n_vars, |i, j| {
            if group(i) == group(j) {
                self.correlation.powi((i as i32 - j as i32).abs())
            } else {
                0.0
            }
        })
    }

    /// Variable metadata after discretization: mixed scenarios turn the first variable
    /// binary, the second ordinal and the last nominal, leaving the changed ones continuous.
    pub fn variables(&self) -> Vec<VariableSpec> {
        let changed = self.changed_idx();
        (0..self.n_vars)
            .map(|k| {
                let name = format!("x{}", k + 1);
                if !self.scenario.mixed() || changed.contains(&k) {
                    return VariableSpec::continuous(name);
                }
                match self.discrete_role(k) {
                    Some(0) => VariableSpec::binary(name),
                    Some(1) => VariableSpec::ordinal(name, vec![1.0, 2.0, 3.0]),
                    Some(_) => VariableSpec::nominal(name, vec![1.0, 2.0, 3.0]),
                    None => VariableSpec::continuous(name),
                }
            })
            .collect()
    }

    fn changed_idx(&self) -> [usize; 2] {
        [self.changed_vars[0] - 1, self.changed_vars[1] - 1]
    }

    /// 0 binary, 1 ordinal, 2 nominal; candidates skip the changed variables.
    fn discrete_role(&self, k: usize) -> Option<usize> {
        let changed = self.changed_idx();
        let free: Vec<usize> = (0..self.n_vars).filter(|i| !changed.contains(i)).collect();
        let roles = [free[0], free[1], *free.last().unwrap()];
        roles.iter().position(|&r| r == k)
    }

    /// Generates one stream; identical specs give identical data.
    pub fn generate(&self) -> Result<SimulatedData> {
        self.validate()?;
        let j = self.n_vars;
        let streams = Streams::new(self.seed);
        let mut rng = streams.stream(0, Purpose::Simulation, 0);
        let cov = self.base_cov();
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("scenario covariance"))?.l();
        let [c3, c4] = self.changed_idx();
        let miss_corr_pre = DMatrix::from_fn(j, j, |a, b| 0.5f64.powi((a as i32 - b as i32).abs()));
        let miss_corr_post = if self.scenario == Scenario::E {
            let mut post = miss_corr_pre.clone();
            let block: Vec<usize> = (0..j.min(4)).map(|k| (c3 + k) % j).collect();
            let sub = DMatrix::from_fn(block.len(), block.len(), |a, b| miss_corr_pre[(block[a], block[b])]);
            let inv_w = inv_spd(&sample_wishart(&mut rng, self.iw_df, &inv_spd(&sub)?)?)?;
            for a in 0..block.len() {
                for b in 0..block.len() {
                    post[(block[a], block[b])] = inv_w[(a, b)] / (inv_w[(a, a)] * inv_w[(b, b)]).sqrt();
                }
            }
            post
        } else {
            miss_corr_pre.clone()
        };
        let chol_miss_pre = miss_corr_pre.cholesky().ok_or(Error::NotPositiveDefinite("missingness correlation"))?.l();
        let chol_miss_post = miss_corr_post.cholesky().ok_or(Error::NotPositiveDefinite("missingness correlation"))?.l();
        let vars = self.variables();
        let a = self.mode_separation;
        let mut days = Vec::with_capacity(self.n_days);
        for t in 0..self.n_days {
            let after = t + 1 > self.change_day;
            let mut rows = Vec::with_capacity(self.obs_per_day);
            for _ in 0..self.obs_per_day {
                let eps = DVector::from_fn(j, |_, _| normal(&mut rng));
                let mut x = &chol * eps;
                if self.scenario.bimodal() {
                    let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    // pre: (a, a) or (−a, −a); post for the mode-shift scenario: (a, −a) or (−a, a)
                    let flip = if after && self.scenario == Scenario::C { -1.0 } else { 1.0 };
                    x[c3] += s * a;
                    x[c4] += s * a * flip;
                }
                if after {
                    match self.scenario {
                        Scenario::A | Scenario::F | Scenario::G => {
                            x[c3] *= self.scale[0];
                            x[c4] *= self.scale[1];
                        }
                        Scenario::B | Scenario::H => {
                            x[c3] += self.mean_shift[0];
                            x[c4] += self.mean_shift[1];
                        }
                        _ => {}
                    }
                }
                let mut row: Vec<Option<f64>> = (0..j).map(|k| Some(discretize(&vars[k], x[k]))).collect();
                if self.scenario.has_missing() {
                    let m = if after { &chol_miss_post } else { &chol_miss_pre };
                    let u = m * DVector::from_fn(j, |_, _| normal(&mut rng));
                    for k in 0..j {
                        let rate = if after && self.scenario == Scenario::D && (k == c3 || k == c4) {
                            self.post_missing_rate
                        } else {
                            self.missing_rate
                        };
                        if u[k] > std_normal_quantile(1.0 - rate) {
                            row[k] = None;
                        }
                    }
                }
                rows.push(row);
            }
            days.push(DayBatch {
                day: t as i64 + 1,
                rows,
            });
        }
        Ok(SimulatedData {
            data: DataStream::new(vars, days)?,
            truth: vec![self.change_day as i64],
        })
    }
}

/// Maps a continuous draw to the variable's coding.
fn discretize(v: &VariableSpec, x: f64) -> f64 {
    use crate::data::Kind;
    match v.kind {
        Kind::Continuous => x,
        Kind::Binary => (x > 0.0) as u8 as f64,
        Kind::Ordinal | Kind::Nominal => {
            if x < -0.43 {
                1.0
            } else if x < 0.43 {
                2.0
            } else {
                3.0
            }
        }
    }
}
