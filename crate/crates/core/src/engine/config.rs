use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelSpec;
use crate::optimizer::BoConfig;
use crate::posterior::POSTERIOR_SAMPLES;
use crate::ratio::LfireConfig;
use crate::utilities::{UtilityConfig, UtilityKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Source of the real observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleConfig {
    /// One simulator draw at the true parameters per iteration. Without
    /// `theta` the model's default truth is used.
    Simulated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<Vec<f64>>,
    },
    /// Observations are supplied from outside through `observe`.
    Interactive,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig::Simulated { theta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub particles: usize,
    pub iterations: usize,
    pub utility: UtilityKind,
    /// Resampling fires when ESS drops below `eta_min * particles`.
    pub eta_min: f64,
    pub seed: u64,
    pub oracle: OracleConfig,
    pub bo: BoConfig,
    pub estimator: UtilityConfig,
    /// Cross-validate the penalty of the per-particle fits behind the
    /// weight update. Utility fits follow `estimator.lfire`.
    pub update_cross_validate: bool,
    pub resample_max_attempts: usize,
    pub posterior_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::oscillation(),
            particles: 1000,
            iterations: 4,
            utility: UtilityKind::Mi,
            eta_min: 0.5,
            seed: 0,
            oracle: OracleConfig::default(),
            bo: BoConfig::default(),
            estimator: UtilityConfig::default(),
            update_cross_validate: true,
            resample_max_attempts: 1000,
            posterior_samples: POSTERIOR_SAMPLES,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.particles < 2 {
            return bad(format!("particles must be at least 2, got {}", self.particles));
        }
        if !(self.eta_min > 0.0 && self.eta_min <= 1.0) {
            return bad(format!("eta_min must lie in (0, 1], got {}", self.eta_min));
        }
        if self.posterior_samples < 2 {
            return bad("posterior_samples must be at least 2".into());
        }
        if self.estimator.lfire.n_likelihood < 2 || self.estimator.lfire.n_marginal < 2 {
            return bad("n_likelihood and n_marginal must be at least 2".into());
        }
        if self.bo.n_init < 1 {
            return bad("bo.n_init must be at least 1".into());
        }
        if let Some(b) = self.bo.budget {
            if b < self.bo.n_init {
                return bad(format!("bo.budget {b} is smaller than bo.n_init {}", self.bo.n_init));
            }
        }
        if let OracleConfig::Simulated { theta: Some(t) } = &self.oracle {
            let dim = self.model.param_dim();
            if t.len() != dim {
                return bad(format!("oracle.theta has {} entries, the model has {dim} parameters", t.len()));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return bad("oracle.theta must be finite".into());
            }
        }
        Ok(())
    }

    /// Parameters used by the simulated oracle.
    pub fn truth(&self) -> Option<Vec<f64>> {
        match &self.oracle {
            OracleConfig::Simulated { theta } => Some(theta.clone().unwrap_or_else(|| self.model.default_truth())),
            OracleConfig::Interactive => None,
        }
    }

    /// Ratio-fit settings for the weight update.
    pub fn update_lfire(&self) -> LfireConfig {
        let mut cfg = self.estimator.lfire.clone();
        cfg.cross_validate |= self.update_cross_validate;
        cfg
    }

    pub fn ess_threshold(&self) -> f64 {
        self.eta_min * self.particles as f64
    }
}
