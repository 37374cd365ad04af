//! The sequential design loop.
//!
//! A [`RunState`] holds the configuration, the current particle belief and
//! the committed history. Each call to [`RunState::step`] runs one
//! iteration: pick the parameter samples the utility is estimated with
//! (prior particles, resampled particles, or draws from the weighted
//! belief), maximise the utility with Bayesian optimisation, fit one ratio
//! model per particle at the chosen design, and then either ask the
//! simulated oracle for the observation or wait for one to be supplied.
//!
//! Every random draw is derived from the master seed and the iteration
//! number, so a run reloaded from disk continues exactly as an
//! uninterrupted run would.

mod config;
mod persist;

pub use config::{ConfigError, OracleConfig, RunConfig};
pub use persist::{load, save, MANIFEST};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, ParticleSet, ResampleReport, UpdateReport};
use crate::models::{ModelError, ModelSpec, Observation};
use crate::optimizer::{bo_optimize, BoError, BoResult};
use crate::posterior::{summarize, PosteriorSummary};
use crate::ratio::RatioModel;
use crate::rng::{SeedNode, Stream};
use crate::utilities::{evaluate, fit_at_design, SurfaceRow, UtilityError, UtilityKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Optimizer(#[from] BoError),
    #[error("operation needs status {expected}, run is {actual}")]
    Status { expected: &'static str, actual: String },
    #[error("iteration {requested} does not exist; {completed} completed")]
    NoSuchIteration { requested: usize, completed: usize },
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    AwaitingObservation { design: f64 },
    Done,
}

impl RunStatus {
    fn name(&self) -> &'static str {
        match self {
            RunStatus::Running => "running",
            RunStatus::AwaitingObservation { .. } => "awaiting_observation",
            RunStatus::Done => "done",
        }
    }
}

/// Where the parameters used for the utility came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticleSource {
    Prior,
    Resampled,
    BeliefSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub ess_before: f64,
    pub ess_threshold: f64,
    pub source: ParticleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample: Option<ResampleReport>,
    pub bo: BoResult,
    /// Every utility evaluation made by the optimiser.
    pub surface: Vec<SurfaceRow>,
    pub design: f64,
    pub observation: Option<Observation>,
    pub observed_summary: Option<Vec<f64>>,
    /// One ratio model per particle at `design`.
    pub ratio_models: Vec<RatioModel>,
    pub n_unconverged: usize,
    pub update: Option<UpdateReport>,
    /// Belief after the weight update.
    pub particles: Option<ParticleSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub schema_version: u32,
    pub config: RunConfig,
    pub status: RunStatus,
    pub particles: ParticleSet,
    /// Completed iterations, oldest first.
    pub history: Vec<IterationRecord>,
    /// Iteration waiting for its observation.
    pub pending: Option<IterationRecord>,
}

/// Compact view of a run for status displays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub status: RunStatus,
    pub model: String,
    pub parameter_names: Vec<String>,
    pub completed: usize,
    pub iterations: usize,
    pub particles: usize,
    pub ess: f64,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub design: f64,
    pub observation: Option<Observation>,
    pub ess_before: f64,
    pub resampled: bool,
}

/// Particles and samples that iteration `k` estimates the utility with.
struct Prepared {
    particles: ParticleSet,
    ess_before: f64,
    source: ParticleSource,
    resample: Option<ResampleReport>,
    thetas: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

/// One simulator draw at the true parameters. Uses only the oracle stream
/// of `seed`.
pub fn simulated_oracle(model: &ModelSpec, theta: &[f64], design: f64, seed: SeedNode) -> Result<Observation, ModelError> {
    model.simulate(theta, design, &mut seed.stream(Stream::Oracle).rng())
}

impl RunState {
    pub fn new(config: RunConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let particles = initial_particles(&config);
        Ok(Self { schema_version: SCHEMA_VERSION, config, status: RunStatus::Running, particles, history: Vec::new(), pending: None })
    }

    pub fn root_seed(&self) -> SeedNode {
        SeedNode::new(self.config.seed)
    }

    pub fn iteration_seed(&self, k: usize) -> SeedNode {
        self.root_seed().child(k as u64)
    }

    pub fn completed(&self) -> usize {
        self.history.len()
    }

    fn require(&self, expected: &'static str) -> Result<(), EngineError> {
        if self.status.name() == expected {
            Ok(())
        } else {
            Err(EngineError::Status { expected, actual: self.status.name().to_string() })
        }
    }

    fn prepare(&self, k: usize) -> Result<Prepared, EngineError> {
        let seed = self.iteration_seed(k);
        let mut particles = self.particles.clone();
        let ess_before = particles.ess()?;
        let (source, resample) = if k == 1 {
            (ParticleSource::Prior, None)
        } else if ess_before < self.config.ess_threshold() {
            let report = particles.resample(self.config.resample_max_attempts, &mut seed.stream(Stream::Resample).rng())?;
            info!("iteration {k}: ESS {ess_before:.1} below threshold, resampled");
            (ParticleSource::Resampled, Some(report))
        } else {
            (ParticleSource::BeliefSamples, None)
        };
        let (thetas, weights) = if self.config.utility == UtilityKind::MiWeighted {
            (particles.thetas.clone(), Some(particles.normalized_weights()))
        } else if source == ParticleSource::BeliefSamples {
            (particles.sample(self.config.particles, &mut seed.stream(Stream::BeliefSamples).rng()), None)
        } else {
            (particles.thetas.clone(), None)
        };
        Ok(Prepared { particles, ess_before, source, resample, thetas, weights })
    }

    /// Runs one iteration. With a simulated oracle the observation is taken
    /// and the weights updated; otherwise the run waits for `observe`.
    pub fn step(&mut self) -> Result<(), EngineError> {
        self.require("running")?;
        let k = self.completed() + 1;
        let seed = self.iteration_seed(k);
        let prep = self.prepare(k)?;
        let model = &self.config.model;
        let cfg = &self.config.estimator;
        let utility_seed = seed.stream(Stream::Utility);
        let mut surface = Vec::new();
        let bo = bo_optimize(
            |d, attempt| -> Result<f64, UtilityError> {
                let s = if attempt == 0 { utility_seed } else { utility_seed.child(attempt as u64) };
                let (est, _) = evaluate(self.config.utility, d, &prep.thetas, prep.weights.as_deref(), &prep.particles, model, cfg, s)?;
                surface.push(SurfaceRow { design: d, value: est.value, n_dropped: est.n_dropped, seed: s.value() });
                Ok(est.value)
            },
            &model.design_domain(),
            &self.config.bo,
            &mut seed.stream(Stream::Optimizer).rng(),
        )?;
        let design = bo.design;
        info!("iteration {k}: design {design}");
        let update_cfg = self.config.update_lfire();
        let fits = fit_at_design(model, design, &prep.particles.thetas, &prep.particles, &update_cfg, seed.stream(Stream::WeightUpdate))?;
        let record = IterationRecord {
            iteration: k,
            ess_before: prep.ess_before,
            ess_threshold: self.config.ess_threshold(),
            source: prep.source,
            resample: prep.resample,
            bo,
            surface,
            design,
            observation: None,
            observed_summary: None,
            ratio_models: fits.models,
            n_unconverged: fits.n_unconverged,
            update: None,
            particles: None,
        };
        self.particles = prep.particles;
        self.pending = Some(record);
        self.status = RunStatus::AwaitingObservation { design };
        if let Some(truth) = self.config.truth() {
            let obs = simulated_oracle(model, &truth, design, seed)?;
            self.observe(obs)?;
        }
        Ok(())
    }

    /// Completes the pending iteration with `obs`. A rejected observation
    /// leaves the state untouched.
    pub fn observe(&mut self, obs: Observation) -> Result<(), EngineError> {
        self.require("awaiting_observation")?;
        let model = &self.config.model;
        model.validate(&obs)?;
        let mut record = self.pending.clone().expect("awaiting state has a pending iteration");
        let summary = model.summary(&obs);
        let mut particles = self.particles.clone();
        let report = particles.update_weights(&record.ratio_models, &summary)?;
        particles.iteration = record.iteration;
        record.observation = Some(obs);
        record.observed_summary = Some(summary);
        record.update = Some(report);
        record.particles = Some(particles.clone());
        self.particles = particles;
        self.pending = None;
        self.history.push(record);
        self.status = if self.completed() >= self.config.iterations { RunStatus::Done } else { RunStatus::Running };
        Ok(())
    }

    /// Parses an externally supplied observation and completes the pending
    /// iteration with it.
    pub fn observe_json(&mut self, value: &serde_json::Value) -> Result<(), EngineError> {
        self.require("awaiting_observation")?;
        let obs = self.config.model.observation_from_json(value)?;
        self.observe(obs)
    }

    /// Steps until the run is done or waiting for an observation.
    pub fn advance(&mut self) -> Result<(), EngineError> {
        self.require("running")?;
        while self.status == RunStatus::Running {
            self.step()?;
        }
        Ok(())
    }

    /// Belief after iteration `k`; `k = 0` is the prior particle set.
    pub fn belief_at(&self, k: usize) -> Result<ParticleSet, EngineError> {
        if k == 0 {
            return Ok(initial_particles(&self.config));
        }
        self.history
            .get(k - 1)
            .and_then(|r| r.particles.clone())
            .ok_or(EngineError::NoSuchIteration { requested: k, completed: self.completed() })
    }

    /// KDE and 95% HPDI per parameter of the belief after iteration `k`.
    pub fn posterior(&self, k: usize) -> Result<PosteriorSummary, EngineError> {
        let belief = self.belief_at(k)?;
        let names = self.config.model.parameter_names();
        let mut rng = self.iteration_seed(k).stream(Stream::Posterior).rng();
        Ok(summarize(&belief, &names, self.config.posterior_samples, &mut rng))
    }

    /// Utility values over `designs` with the samples the next iteration
    /// would use. All designs share one seed.
    pub fn utility_surface(&self, designs: &[f64]) -> Result<Vec<SurfaceRow>, EngineError> {
        let k = self.completed() + 1;
        let prep = self.prepare(k)?;
        let domain = self.config.model.design_domain();
        let seed = self.iteration_seed(k).stream(Stream::Utility);
        designs
            .iter()
            .map(|&d| {
                if !domain.contains(d) {
                    return Err(ModelError::DesignOutOfDomain { design: d, domain: domain.to_string() }.into());
                }
                let (est, _) = evaluate(
                    self.config.utility,
                    d,
                    &prep.thetas,
                    prep.weights.as_deref(),
                    &prep.particles,
                    &self.config.model,
                    &self.config.estimator,
                    seed,
                )?;
                Ok(SurfaceRow { design: d, value: est.value, n_dropped: est.n_dropped, seed: seed.value() })
            })
            .collect()
    }

    pub fn view(&self) -> StateView {
        StateView {
            status: self.status,
            model: self.config.model.kind().to_string(),
            parameter_names: self.config.model.parameter_names().iter().map(|s| s.to_string()).collect(),
            completed: self.completed(),
            iterations: self.config.iterations,
            particles: self.particles.len(),
            ess: self.particles.ess().unwrap_or(0.0),
            history: self
                .history
                .iter()
                .chain(self.pending.iter())
                .map(|r| HistoryEntry {
                    iteration: r.iteration,
                    design: r.design,
                    observation: r.observation,
                    ess_before: r.ess_before,
                    resampled: r.resample.is_some(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run state serializes")
    }
}

fn initial_particles(config: &RunConfig) -> ParticleSet {
    let mut rng = SeedNode::new(config.seed).stream(Stream::Prior).rng();
    let thetas = config.model.sample_prior(config.particles, &mut rng);
    ParticleSet::uniform(thetas, config.model.bounds())
}
