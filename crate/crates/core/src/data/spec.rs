use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Binary,
    Ordinal,
    Nominal,
}

/// Metadata for one observed column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: Kind,
    #[serde(default = "neg_inf", skip_serializing_if = "is_neg_inf")]
    pub lower: f64,
    #[serde(default = "pos_inf", skip_serializing_if = "is_pos_inf")]
    pub upper: f64,
    /// Ordered level codes for discrete kinds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<f64>,
    /// Source column when this is a missingness indicator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicator_of: Option<String>,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

fn is_neg_inf(x: &f64) -> bool {
    *x == f64::NEG_INFINITY
}

fn is_pos_inf(x: &f64) -> bool {
    *x == f64::INFINITY
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: Kind::Continuous,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            levels: Vec::new(),
            indicator_of: None,
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self {
            kind: Kind::Binary,
            levels: vec![0.0, 1.0],
            ..Self::continuous(name)
        }
    }

    pub fn ordinal(name: impl Into<String>, levels: Vec<f64>) -> Self {
        Self {
            kind: Kind::Ordinal,
            levels,
            ..Self::continuous(name)
        }
    }

    pub fn nominal(name: impl Into<String>, levels: Vec<f64>) -> Self {
        Self {
            kind: Kind::Nominal,
            levels,
            ..Self::continuous(name)
        }
    }

    pub fn is_missing_indicator(&self) -> bool {
        self.indicator_of.is_some()
    }

    pub fn is_discrete(&self) -> bool {
        self.kind != Kind::Continuous
    }

    /// Number of latent columns this variable occupies.
    pub fn latent_width(&self) -> usize {
        match self.kind {
            Kind::Nominal => self.levels.len(),
            _ => 1,
        }
    }

    pub fn level_index(&self, value: f64) -> Option<usize> {
        self.levels.iter().position(|&l| l == value)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidVariable {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.is_empty() || self.name == "day" {
            return Err(bad("reserved or empty name"));
        }
        if !(self.lower < self.upper) {
            return Err(bad("lower bound must be below upper bound"));
        }
        match self.kind {
            Kind::Continuous => {
                if !self.levels.is_empty() {
                    return Err(bad("continuous variables take no levels"));
                }
            }
            Kind::Binary | Kind::Ordinal | Kind::Nominal => {
                let need = if self.kind == Kind::Binary { 2 } else { 0 };
                if self.levels.len() < 2 || (need == 2 && self.levels.len() != 2) {
                    return Err(bad("binary needs exactly 2 levels, ordinal/nominal at least 2"));
                }
                if self.levels.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(bad("levels must be strictly increasing"));
                }
            }
        }
        if self.is_missing_indicator() && (self.kind != Kind::Binary || self.levels != [0.0, 1.0]) {
            return Err(bad("missingness indicators must be binary with levels 0, 1"));
        }
        Ok(())
    }

    /// Checks one observed value against the declared kind.
    pub fn check_value(&self, v: f64) -> std::result::Result<(), String> {
        if !v.is_finite() {
            return Err("non-finite value".into());
        }
        match self.kind {
            Kind::Continuous => {
                if v < self.lower || v > self.upper {
                    Err(format!("value {v} outside [{}, {}]", self.lower, self.upper))
                } else {
                    Ok(())
                }
            }
            _ => {
                if self.level_index(v).is_some() {
                    Ok(())
                } else {
                    Err(format!("level not declared: {v}"))
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    variable: Vec<VariableSpec>,
}

pub fn read_spec(path: &Path) -> Result<Vec<VariableSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec(&text)
}

pub(crate) fn parse_spec(text: &str) -> Result<Vec<VariableSpec>> {
    let f: SpecFile = toml::from_str(text).map_err(|e| Error::SpecFormat(e.to_string()))?;
    for v in &f.variable {
        v.validate()?;
    }
    let mut names: Vec<&str> = f.variable.iter().map(|v| v.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::SpecFormat(format!("duplicate variable `{}`", w[0])));
    }
    Ok(f.variable)
}

pub fn write_spec(path: &Path, vars: &[VariableSpec]) -> Result<()> {
    let text = toml::to_string(&SpecFile {
        variable: vars.to_vec(),
    })
    .map_err(|e| Error::SpecFormat(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
