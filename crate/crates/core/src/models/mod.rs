//! Implicit simulators with their priors, design domains and summary statistics.
//!
//! Four models are provided: a noisy sinusoid (`oscillation`), a binomial
//! death process (`death`), a discrete-time stochastic SIR epidemic (`sir`)
//! and a lattice exclusion process for cell motility and proliferation
//! (`cell`). Each is selected and configured through [`ModelSpec`].

mod cell;
mod death;
mod oscillation;
mod sir;

pub use cell::{simulate_cell, simulate_cell_trajectory, CellSettings, CellSnapshot};
pub use death::{death_log_likelihood, simulate_death, DeathSettings};
pub use oscillation::{oscillation_log_likelihood, simulate_oscillation, OscillationSettings};
pub use sir::{simulate_sir, SirSettings, SirState};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

pub type ParameterVector = Vec<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("design {design} is outside the design domain {domain}")]
    DesignOutOfDomain { design: f64, domain: String },
    #[error("parameter vector has {got} entries, model expects {expected}")]
    ParameterDimension { expected: usize, got: usize },
    #[error("observation rejected: {0}")]
    InvalidObservation(String),
    #[error("model `{0}` has no analytic likelihood")]
    NoAnalyticLikelihood(ModelKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Oscillation,
    Death,
    Sir,
    Cell,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Oscillation => "oscillation",
            ModelKind::Death => "death",
            ModelKind::Sir => "sir",
            ModelKind::Cell => "cell",
        };
        f.write_str(s)
    }
}

/// Where designs live: a closed interval, or the integer frames `1..=count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DesignDomain {
    Interval { lo: f64, hi: f64 },
    Grid { count: u32 },
}

impl DesignDomain {
    pub fn lower(&self) -> f64 {
        match *self {
            DesignDomain::Interval { lo, .. } => lo,
            DesignDomain::Grid { .. } => 1.0,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            DesignDomain::Interval { hi, .. } => hi,
            DesignDomain::Grid { count } => count as f64,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper() - self.lower()
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, DesignDomain::Grid { .. })
    }

    pub fn contains(&self, d: f64) -> bool {
        match *self {
            DesignDomain::Interval { lo, hi } => d >= lo && d <= hi,
            DesignDomain::Grid { count } => d.fract() == 0.0 && d >= 1.0 && d <= count as f64,
        }
    }

    /// All members of a discrete domain, in order. Empty for intervals.
    pub fn members(&self) -> Vec<f64> {
        match *self {
            DesignDomain::Interval { .. } => Vec::new(),
            DesignDomain::Grid { count } => (1..=count).map(f64::from).collect(),
        }
    }

    /// `n` evenly spaced designs spanning the domain (rounded and
    /// de-duplicated for grids).
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = (self.lower(), self.upper());
        let mut out: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        if self.is_discrete() {
            for x in &mut out {
                *x = x.round();
            }
            out.dedup();
        }
        out
    }
}

impl std::fmt::Display for DesignDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DesignDomain::Interval { lo, hi } => write!(f, "[{lo}, {hi}]"),
            DesignDomain::Grid { count } => write!(f, "{{1, ..., {count}}}"),
        }
    }
}

/// Per-dimension prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    /// Normal(mean, sd) restricted to values strictly above `lower`.
    TruncatedNormal { mean: f64, sd: f64, lower: f64 },
}

impl Prior {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Prior::TruncatedNormal { mean, sd, lower } => loop {
                let z: f64 = StandardNormal.sample(rng);
                let x = mean + sd * z;
                if x > lower {
                    break x;
                }
            },
        }
    }

    /// Support of the prior as a closed interval.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Prior::Uniform { lo, hi } => (lo, hi),
            Prior::TruncatedNormal { lower, .. } => (lower, f64::INFINITY),
        }
    }
}

/// A raw observation, one shape per model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observation {
    Scalar(f64),
    Count(u32),
    Sir(SirState),
    Cell(CellSnapshot),
}

/// Model selection plus per-model settings. Every field has a default, so a
/// config only needs `name = "<model>"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ModelSpec {
    Oscillation(OscillationSettings),
    Death(DeathSettings),
    Sir(SirSettings),
    Cell(CellSettings),
}

impl ModelSpec {
    pub fn oscillation() -> Self {
        ModelSpec::Oscillation(OscillationSettings::default())
    }

    pub fn death() -> Self {
        ModelSpec::Death(DeathSettings::default())
    }

    pub fn sir() -> Self {
        ModelSpec::Sir(SirSettings::default())
    }

    pub fn cell() -> Self {
        ModelSpec::Cell(CellSettings::default())
    }

    pub fn from_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Oscillation => Self::oscillation(),
            ModelKind::Death => Self::death(),
            ModelKind::Sir => Self::sir(),
            ModelKind::Cell => Self::cell(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Oscillation(_) => ModelKind::Oscillation,
            ModelSpec::Death(_) => ModelKind::Death,
            ModelSpec::Sir(_) => ModelKind::Sir,
            ModelSpec::Cell(_) => ModelKind::Cell,
        }
    }

    pub fn design_domain(&self) -> DesignDomain {
        match self {
            ModelSpec::Oscillation(s) => DesignDomain::Interval { lo: 0.0, hi: s.t_max },
            ModelSpec::Death(s) => DesignDomain::Interval { lo: 0.0, hi: s.t_max },
            ModelSpec::Sir(s) => DesignDomain::Interval { lo: 0.0, hi: s.t_max },
            ModelSpec::Cell(s) => DesignDomain::Grid { count: s.frames },
        }
    }

    pub fn priors(&self) -> Vec<Prior> {
        match self {
            ModelSpec::Oscillation(_) => vec![Prior::Uniform { lo: 0.0, hi: std::f64::consts::PI }],
            ModelSpec::Death(_) => vec![Prior::TruncatedNormal { mean: 1.0, sd: 1.0, lower: 0.0 }],
            ModelSpec::Sir(_) => vec![Prior::Uniform { lo: 0.0, hi: 0.5 }; 2],
            ModelSpec::Cell(_) => vec![
                Prior::Uniform { lo: 0.0, hi: 1.0 },
                Prior::Uniform { lo: 0.0, hi: 0.005 },
            ],
        }
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.priors().iter().map(Prior::support).collect()
    }

    pub fn param_dim(&self) -> usize {
        match self {
            ModelSpec::Oscillation(_) | ModelSpec::Death(_) => 1,
            ModelSpec::Sir(_) | ModelSpec::Cell(_) => 2,
        }
    }

    pub fn summary_dim(&self) -> usize {
        match self {
            ModelSpec::Oscillation(_) | ModelSpec::Death(_) => 3,
            ModelSpec::Sir(_) => 9,
            ModelSpec::Cell(_) => 2,
        }
    }

    pub fn parameter_names(&self) -> Vec<&'static str> {
        match self {
            ModelSpec::Oscillation(_) => vec!["omega"],
            ModelSpec::Death(_) => vec!["b"],
            ModelSpec::Sir(_) => vec!["beta", "gamma"],
            ModelSpec::Cell(_) => vec!["p_motility", "p_proliferation"],
        }
    }

    /// The data-generating parameters used by the simulated oracle when the
    /// config does not name any.
    pub fn default_truth(&self) -> ParameterVector {
        match self {
            ModelSpec::Oscillation(_) => vec![0.5],
            ModelSpec::Death(_) => vec![1.5],
            ModelSpec::Sir(_) => vec![0.15, 0.05],
            ModelSpec::Cell(_) => vec![0.35, 0.001],
        }
    }

    pub fn sample_prior(&self, n: usize, rng: &mut Rng) -> Vec<ParameterVector> {
        let priors = self.priors();
        (0..n)
            .map(|_| priors.iter().map(|p| p.sample(rng)).collect())
            .collect()
    }

    fn check(&self, theta: &[f64], design: f64) -> Result<(), ModelError> {
        if theta.len() != self.param_dim() {
            return Err(ModelError::ParameterDimension { expected: self.param_dim(), got: theta.len() });
        }
        let domain = self.design_domain();
        if !domain.contains(design) {
            return Err(ModelError::DesignOutOfDomain { design, domain: domain.to_string() });
        }
        Ok(())
    }

    /// One forward simulation at `design`.
    pub fn simulate(&self, theta: &[f64], design: f64, rng: &mut Rng) -> Result<Observation, ModelError> {
        self.check(theta, design)?;
        Ok(match self {
            ModelSpec::Oscillation(s) => Observation::Scalar(simulate_oscillation(theta[0], design, s, rng)),
            ModelSpec::Death(s) => Observation::Count(simulate_death(theta[0], design, s, rng)),
            ModelSpec::Sir(s) => Observation::Sir(simulate_sir(theta[0], theta[1], design, s, rng)),
            ModelSpec::Cell(s) => Observation::Cell(simulate_cell(theta[0], theta[1], design as u32, s, rng)),
        })
    }

    /// Write the summary statistics of `obs` into `out` (length `summary_dim`).
    pub fn summarize_into(&self, obs: &Observation, out: &mut [f64]) {
        match *obs {
            Observation::Scalar(y) => powers(y, out),
            Observation::Count(i) => powers(f64::from(i), out),
            Observation::Sir(st) => {
                let i = f64::from(st.i);
                let r = f64::from(st.r);
                out.copy_from_slice(&[i, i * i, i * i * i, r, r * r, r * r * r, i * r, i * i * r, i * r * r]);
            }
            Observation::Cell(c) => {
                out[0] = f64::from(c.hamming);
                out[1] = f64::from(c.count);
            }
        }
    }

    pub fn summary(&self, obs: &Observation) -> Vec<f64> {
        let mut out = vec![0.0; self.summary_dim()];
        self.summarize_into(obs, &mut out);
        out
    }

    /// Schema check for observations entering from outside (a human or the API).
    pub fn validate(&self, obs: &Observation) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidObservation(msg));
        match (self, obs) {
            (ModelSpec::Oscillation(_), Observation::Scalar(y)) => {
                if !y.is_finite() {
                    return bad(format!("y = {y} is not finite"));
                }
            }
            (ModelSpec::Death(s), Observation::Count(i)) => {
                if *i > s.population {
                    return bad(format!("infected count {i} exceeds population {}", s.population));
                }
            }
            (ModelSpec::Sir(s), Observation::Sir(st)) => {
                let total = u64::from(st.s) + u64::from(st.i) + u64::from(st.r);
                if total != u64::from(s.population) {
                    return bad(format!(
                        "S + I + R = {total} but the population is {}",
                        s.population
                    ));
                }
            }
            (ModelSpec::Cell(s), Observation::Cell(c)) => {
                let sites = s.rows * s.cols;
                if c.count < s.initial_cells {
                    return bad(format!("cell count {} is below the initial {}", c.count, s.initial_cells));
                }
                if c.count > sites {
                    return bad(format!("cell count {} exceeds the {sites} lattice sites", c.count));
                }
                if c.hamming > sites {
                    return bad(format!("Hamming distance {} exceeds the {sites} lattice sites", c.hamming));
                }
            }
            (spec, other) => {
                return bad(format!("{other:?} is not an observation of the {} model", spec.kind()));
            }
        }
        Ok(())
    }

    /// Interpret an externally supplied JSON value as an observation:
    /// a number for `oscillation` and `death`, `{s, i, r}` for `sir`,
    /// `{hamming, count}` for `cell`. The tagged form used in run-state
    /// files is accepted too.
    pub fn observation_from_json(&self, value: &serde_json::Value) -> Result<Observation, ModelError> {
        if let Ok(obs) = serde_json::from_value::<Observation>(value.clone()) {
            self.validate(&obs)?;
            return Ok(obs);
        }
        let bad = |what: &str| ModelError::InvalidObservation(format!("expected {what}, got {value}"));
        let obs = match self {
            ModelSpec::Oscillation(_) => Observation::Scalar(value.as_f64().ok_or_else(|| bad("a number"))?),
            ModelSpec::Death(_) => {
                let x = value.as_f64().ok_or_else(|| bad("an integer count"))?;
                if x < 0.0 || x.fract() != 0.0 || x > f64::from(u32::MAX) {
                    return Err(bad("a non-negative integer count"));
                }
                Observation::Count(x as u32)
            }
            ModelSpec::Sir(_) => Observation::Sir(
                serde_json::from_value(value.clone()).map_err(|_| bad("{\"s\", \"i\", \"r\"}"))?,
            ),
            ModelSpec::Cell(_) => Observation::Cell(
                serde_json::from_value(value.clone()).map_err(|_| bad("{\"hamming\", \"count\"}"))?,
            ),
        };
        self.validate(&obs)?;
        Ok(obs)
    }

    /// Exact log-likelihood, only for models where it is tractable.
    pub fn log_likelihood(&self, theta: &[f64], design: f64, obs: &Observation) -> Result<f64, ModelError> {
        match (self, obs) {
            (ModelSpec::Oscillation(s), Observation::Scalar(y)) => {
                Ok(oscillation_log_likelihood(*y, theta[0], design, s.noise_sd))
            }
            (ModelSpec::Death(s), Observation::Count(i)) => {
                // the stepped chain covers whole steps only
                let elapsed = step_count(design, s.dt) as f64 * s.dt;
                Ok(death_log_likelihood(*i, theta[0], elapsed, s.population))
            }
            (ModelSpec::Oscillation(_), _) | (ModelSpec::Death(_), _) => Err(
                ModelError::InvalidObservation(format!("{obs:?} does not match the {} model", self.kind())),
            ),
            _ => Err(ModelError::NoAnalyticLikelihood(self.kind())),
        }
    }

    pub fn has_analytic_likelihood(&self) -> bool {
        matches!(self, ModelSpec::Oscillation(_) | ModelSpec::Death(_))
    }
}

fn powers(x: f64, out: &mut [f64]) {
    out[0] = x;
    out[1] = x * x;
    out[2] = x * x * x;
}

/// Number of Δt steps needed to reach time `tau`. A small tolerance keeps
/// `1.0 / 0.01` from landing on 99.
pub(crate) fn step_count(tau: f64, dt: f64) -> u64 {
    if tau <= 0.0 {
        0
    } else {
        (tau / dt + 1e-9).floor() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedNode;
    use std::f64::consts::PI;

    fn rng(seed: u64) -> Rng {
        SeedNode::new(seed).rng()
    }

    #[test]
    fn spec_shapes() {
        let osc = ModelSpec::oscillation();
        assert_eq!(osc.design_domain(), DesignDomain::Interval { lo: 0.0, hi: 2.0 * PI });
        assert_eq!((osc.param_dim(), osc.summary_dim()), (1, 3));
        let death = ModelSpec::death();
        assert_eq!(death.design_domain(), DesignDomain::Interval { lo: 0.0, hi: 4.0 });
        let sir = ModelSpec::sir();
        assert_eq!((sir.param_dim(), sir.summary_dim()), (2, 9));
        assert_eq!(sir.design_domain().upper(), 10.0);
        let cell = ModelSpec::cell();
        assert_eq!(cell.design_domain(), DesignDomain::Grid { count: 145 });
        assert_eq!((cell.param_dim(), cell.summary_dim()), (2, 2));
    }

    #[test]
    fn oscillation_prior_mean() {
        let draws = ModelSpec::oscillation().sample_prior(10_000, &mut rng(1));
        let mean = draws.iter().map(|t| t[0]).sum::<f64>() / 1e4;
        let tol = 3.0 * (PI / 12f64.sqrt()) / 100.0;
        assert!((mean - PI / 2.0).abs() < tol, "mean {mean}");
    }

    #[test]
    fn sir_prior_support() {
        for t in ModelSpec::sir().sample_prior(5000, &mut rng(2)) {
            assert!(t.iter().all(|&x| (0.0..=0.5).contains(&x)));
        }
    }

    #[test]
    fn death_prior_truncated_mean() {
        // E[X | X > 0] for X ~ N(1, 1): mu + sigma * phi(-mu/sigma) / (1 - Phi(-mu/sigma))
        use statrs::distribution::{Continuous, ContinuousCDF, Normal};
        let n = Normal::new(0.0, 1.0).unwrap();
        let expected = 1.0 + n.pdf(-1.0) / (1.0 - n.cdf(-1.0));
        assert!((expected - 1.2876).abs() < 1e-4);
        let draws = ModelSpec::death().sample_prior(100_000, &mut rng(3));
        assert!(draws.iter().all(|t| t[0] > 0.0));
        let mean = draws.iter().map(|t| t[0]).sum::<f64>() / 1e5;
        assert!((mean - expected).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn design_domain_checks() {
        let cell = ModelSpec::cell();
        let mut r = rng(4);
        assert!(matches!(
            cell.simulate(&[0.3, 0.001], 0.0, &mut r),
            Err(ModelError::DesignOutOfDomain { .. })
        ));
        assert!(cell.simulate(&[0.3, 0.001], 146.0, &mut r).is_err());
        assert!(cell.simulate(&[0.3, 0.001], 2.5, &mut r).is_err());
        assert!(cell.simulate(&[0.3, 0.001], 145.0, &mut r).is_ok());
        assert!(ModelSpec::oscillation().simulate(&[0.5], 7.0, &mut r).is_err());
        assert!(matches!(
            ModelSpec::sir().simulate(&[0.1], 1.0, &mut r),
            Err(ModelError::ParameterDimension { .. })
        ));
    }

    #[test]
    fn same_seed_same_output() {
        for spec in [ModelSpec::oscillation(), ModelSpec::death(), ModelSpec::sir(), ModelSpec::cell()] {
            let theta = spec.default_truth();
            let d = match spec.design_domain() {
                DesignDomain::Interval { hi, .. } => 0.4 * hi,
                DesignDomain::Grid { .. } => 60.0,
            };
            let a = spec.simulate(&theta, d, &mut rng(9)).unwrap();
            let b = spec.simulate(&theta, d, &mut rng(9)).unwrap();
            assert_eq!(a, b);
            let s = spec.summary(&a);
            assert_eq!(s.len(), spec.summary_dim());
            assert!(s.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn observation_validation() {
        let death = ModelSpec::death();
        assert!(death.validate(&Observation::Count(51)).is_err());
        assert!(death.validate(&Observation::Count(50)).is_ok());
        let sir = ModelSpec::sir();
        assert!(sir.validate(&Observation::Sir(SirState { s: 10, i: 10, r: 10 })).is_err());
        assert!(sir.validate(&Observation::Sir(SirState { s: 30, i: 10, r: 10 })).is_ok());
        let cell = ModelSpec::cell();
        assert!(cell.validate(&Observation::Cell(CellSnapshot { hamming: 0, count: 109 })).is_err());
        assert!(cell.validate(&Observation::Cell(CellSnapshot { hamming: 4, count: 112 })).is_ok());
        assert!(death.validate(&Observation::Scalar(1.0)).is_err());
    }

    #[test]
    fn observation_json_shapes() {
        let osc = ModelSpec::oscillation();
        assert_eq!(osc.observation_from_json(&serde_json::json!(0.79)).unwrap(), Observation::Scalar(0.79));
        let death = ModelSpec::death();
        assert_eq!(death.observation_from_json(&serde_json::json!(38)).unwrap(), Observation::Count(38));
        assert!(death.observation_from_json(&serde_json::json!(51)).is_err());
        assert!(death.observation_from_json(&serde_json::json!(3.5)).is_err());
        let sir = ModelSpec::sir();
        let obs = sir.observation_from_json(&serde_json::json!({"s": 40, "i": 6, "r": 4})).unwrap();
        assert_eq!(obs, Observation::Sir(SirState { s: 40, i: 6, r: 4 }));
        assert!(sir.observation_from_json(&serde_json::json!({"s": 40, "i": 6, "r": 5})).is_err());
        let cell = ModelSpec::cell();
        assert!(cell.observation_from_json(&serde_json::json!({"hamming": 3, "count": 111})).is_ok());
    }

    #[test]
    fn step_count_is_robust_to_rounding() {
        assert_eq!(step_count(1.0, 0.01), 100);
        assert_eq!(step_count(0.0, 0.01), 0);
        assert_eq!(step_count(0.3, 0.1), 3);
        assert_eq!(step_count(0.005, 0.01), 0);
    }
}
