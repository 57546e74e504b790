use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which graphs the chain may visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// Any graph; edge moves by double reversible jump.
    #[default]
    Sparse,
    /// Complete graph, never updated.
    Full,
    /// Edge moves restricted to chordal graphs.
    Decomposable,
}

impl std::str::FromStr for GraphMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Self::Sparse),
            "full" => Ok(Self::Full),
            "decomposable" => Ok(Self::Decomposable),
            other => Err(Error::Config(format!("unknown graph mode `{other}`"))),
        }
    }
}

/// Sampler settings; every field has a default so config files may be partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    /// Defaults to 20% of `n_iterations`.
    pub burn_in: Option<usize>,
    /// Mixture truncation level `Q`.
    pub components: usize,
    /// Maximum number of regimes `R`; defaults to `min(T, 60)`.
    pub max_regimes: Option<usize>,
    /// Dirichlet-process concentration.
    pub alpha: f64,
    /// Independent edge inclusion probability of the graph prior.
    pub rho: f64,
    /// Proposal scale of the reversible-jump Cholesky perturbation.
    pub sigma_g: f64,
    /// G-Wishart degrees of freedom; defaults to `3 + p`.
    pub nu: Option<f64>,
    pub snapshot_stride: usize,
    pub cutoff: f64,
    pub graph_mode: GraphMode,
    pub seed: u64,
    /// Restricted Gibbs sweeps building the component split-merge launch state.
    pub launch_sweeps: usize,
    /// Edge proposals per sweep; defaults to `p`.
    pub graph_moves: Option<usize>,
    /// Monte-Carlo draws for prior-side normalizing constants.
    pub n_mc: usize,
    /// Disables the chordal closed form for normalizing constants.
    pub force_general_constants: bool,
    pub lambda_init: f64,
    /// Gamma shape `c` and rate `d` of the prior on `λ`.
    pub lambda_shape: f64,
    pub lambda_rate: f64,
    /// Gamma shape and rate of the priors on the transition Beta parameters.
    pub w_shape: f64,
    pub w_rate: f64,
    pub v_shape: f64,
    pub v_rate: f64,
    /// Log-scale random-walk step for `w` and `v`.
    pub wv_step: f64,
    /// Prior mean of `m`; defaults to the empirical mean of the initial latent data.
    pub mean_prior_center: Option<Vec<f64>>,
    /// Fraction by which the off-diagonal entries of the empirical covariance behind `D` are shrunk.
    pub d_shrinkage: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iterations: 300,
            burn_in: None,
            components: 7,
            max_regimes: None,
            alpha: 0.1,
            rho: 0.5,
            sigma_g: 0.5,
            nu: None,
            snapshot_stride: 5,
            cutoff: 0.5,
            graph_mode: GraphMode::Sparse,
            seed: 0,
            launch_sweeps: 5,
            graph_moves: None,
            n_mc: 1000,
            force_general_constants: false,
            lambda_init: 1.0,
            lambda_shape: 1.0,
            lambda_rate: 1.0,
            w_shape: 1.0,
            w_rate: 0.1,
            v_shape: 1.0,
            v_rate: 0.1,
            wv_step: 0.2,
            mean_prior_center: None,
            d_shrinkage: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_iterations / 5).min(self.n_iterations)
    }

    pub fn max_regimes(&self, n_days: usize) -> usize {
        self.max_regimes.unwrap_or(n_days.min(60)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1");
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return bad("cutoff must lie in (0, 1)");
        }
        if self.components == 0 {
            return bad("components must be at least 1");
        }
        if !(self.alpha > 0.0) || !(self.sigma_g > 0.0) || !(self.lambda_init > 0.0) {
            return bad("alpha, sigma_g and lambda_init must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if let Some(nu) = self.nu {
            if !(nu > 2.0) {
                return bad("nu must exceed 2");
            }
        }
        if let Some(r) = self.max_regimes {
            if r == 0 {
                return bad("max_regimes must be at least 1");
            }
        }
        for (v, name) in [
            (self.lambda_shape, "lambda_shape"),
            (self.lambda_rate, "lambda_rate"),
            (self.w_shape, "w_shape"),
            (self.w_rate, "w_rate"),
            (self.v_shape, "v_shape"),
            (self.v_rate, "v_rate"),
            (self.wv_step, "wv_step"),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.d_shrinkage) {
            return bad("d_shrinkage must lie in [0, 1]");
        }
        if let Some(b) = self.burn_in {
            if b > self.n_iterations {
                return bad("burn_in exceeds n_iterations");
            }
        }
        Ok(())
    }
}
