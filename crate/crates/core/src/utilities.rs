//! Design utilities: the LFIRE mutual-information estimate and its
//! importance-weighted variant, Bayesian D-optimality, and a nested Monte
//! Carlo reference for models with a tractable likelihood.

use std::fmt::Write as _;

use log::{debug, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, ParticleSet};
use crate::models::{ModelError, ModelSpec};
use crate::ratio::{sample_marginal, simulate_summaries, train_ratio_lenient, LfireConfig, RatioError, RatioModel, SummaryMatrix};
use crate::rng::{SeedNode, Stream};

#[derive(Debug, Error)]
pub enum UtilityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ratio(#[from] RatioError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("{dropped} of {total} particles gave non-finite log-ratios")]
    TooManyDropped { dropped: usize, total: usize },
    #[error("no parameter samples to evaluate")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    #[default]
    Mi,
    MiWeighted,
    BdOpt,
    BdOptStable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityConfig {
    pub lfire: LfireConfig,
    pub bd_aggregation: Aggregation,
    /// Value recorded for a draw whose posterior covariance is singular.
    pub singular_cap: f64,
    /// Log-ratios are clipped to ±clip before averaging.
    pub clip: f64,
    pub max_drop_fraction: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            lfire: LfireConfig::default(),
            bd_aggregation: Aggregation::Median,
            singular_cap: 1e12,
            clip: 50.0,
            max_drop_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub design: f64,
    pub value: f64,
    pub std_error: f64,
    pub n_particles: usize,
    pub n_dropped: usize,
    pub n_clipped: usize,
    pub n_unconverged: usize,
    #[serde(skip)]
    pub per_particle_log_ratios: Option<Vec<f64>>,
    #[serde(skip)]
    pub ratio_models: Option<Vec<RatioModel>>,
}

/// Per-particle ratio fits at one design, with the simulated y^(i) each
/// utility summand is evaluated at.
#[derive(Debug, Clone)]
pub struct DesignFits {
    pub design: f64,
    pub thetas: Vec<Vec<f64>>,
    /// Summary of the first likelihood draw for each θ^(i).
    pub observed: SummaryMatrix,
    pub models: Vec<RatioModel>,
    pub n_unconverged: usize,
}

/// Seed for the likelihood stream of one particle. It depends on the
/// parameter values and on how many identical parameters came before, so
/// a permutation of the particle list leaves every stream attached to the
/// same θ.
fn particle_seeds(base: SeedNode, thetas: &[Vec<f64>]) -> Vec<SeedNode> {
    let keys: Vec<SeedNode> = thetas.iter().map(|t| t.iter().fold(base, |s, v| s.child(v.to_bits()))).collect();
    let mut order: Vec<usize> = (0..thetas.len()).collect();
    order.sort_by_key(|&i| keys[i].value());
    let mut out = keys.clone();
    let mut run = 0u64;
    for w in 0..order.len() {
        if w > 0 && keys[order[w]] == keys[order[w - 1]] {
            run += 1;
        } else {
            run = 0;
        }
        out[order[w]] = keys[order[w]].child(run);
    }
    out
}

/// Fits one ratio model per θ at `design`. Marginal samples come from
/// `belief` and are shared by all fits.
pub fn fit_at_design(
    model: &ModelSpec,
    design: f64,
    thetas: &[Vec<f64>],
    belief: &ParticleSet,
    cfg: &LfireConfig,
    seed: SeedNode,
) -> Result<DesignFits, UtilityError> {
    if thetas.is_empty() {
        return Err(UtilityError::NoSamples);
    }
    let dim = model.summary_dim();
    let marginal = sample_marginal(design, belief, cfg.n_marginal, model, &mut seed.stream(Stream::Marginal).rng())?;
    let seeds = particle_seeds(seed.stream(Stream::Likelihood), thetas);
    let n_like = cfg.n_likelihood.max(1);
    let fitted: Vec<(Vec<f64>, RatioModel)> = thetas
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(theta, s)| -> Result<_, UtilityError> {
            let mut rng = s.rng();
            let mut like = SummaryMatrix::with_capacity(dim, n_like);
            simulate_summaries(model, theta, design, n_like, &mut like, &mut rng)?;
            let fit = train_ratio_lenient(theta, design, &like, &marginal, cfg)?;
            Ok((like.row(0).to_vec(), fit))
        })
        .collect::<Result<_, _>>()?;
    let mut observed = SummaryMatrix::with_capacity(dim, thetas.len());
    let mut models = Vec::with_capacity(thetas.len());
    for (y, m) in fitted {
        observed.push(&y)?;
        models.push(m);
    }
    let n_unconverged = models.iter().filter(|m| !m.diagnostics.converged).count();
    Ok(DesignFits { design, thetas: thetas.to_vec(), observed, models, n_unconverged })
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

/// Monte Carlo MI estimate from fitted ratios: the (optionally weighted)
/// mean of log r̂_i(y^(i)).
pub fn mi_from_fits(fits: &DesignFits, weights: Option<&[f64]>, cfg: &UtilityConfig) -> Result<UtilityEstimate, UtilityError> {
    let n = fits.models.len();
    let mut lrs = Vec::with_capacity(n);
    let (mut dropped, mut clipped) = (0, 0);
    for (i, m) in fits.models.iter().enumerate() {
        let l = m.eval(fits.observed.row(i));
        if !l.is_finite() {
            dropped += 1;
            lrs.push(f64::NAN);
            continue;
        }
        if l.abs() > cfg.clip {
            clipped += 1;
        }
        lrs.push(l.clamp(-cfg.clip, cfg.clip));
    }
    if dropped as f64 > cfg.max_drop_fraction * n as f64 {
        return Err(UtilityError::TooManyDropped { dropped, total: n });
    }
    if dropped > 0 {
        warn!("dropped {dropped} non-finite log-ratios at d={}", fits.design);
    }
    if clipped > 0 {
        debug!("clipped {clipped} log-ratios at d={}", fits.design);
    }
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let keep: Vec<usize> = (0..n).filter(|&i| lrs[i].is_finite()).collect();
    let sw = sorted_sum(keep.iter().map(|&i| w[i]).collect());
    if sw <= 0.0 {
        return Err(UtilityError::NoSamples);
    }
    let value = sorted_sum(keep.iter().map(|&i| w[i] * lrs[i]).collect()) / sw;
    let var_num = sorted_sum(keep.iter().map(|&i| (w[i] * (lrs[i] - value)).powi(2)).collect());
    let std_error = if weights.is_some() {
        var_num.sqrt() / sw
    } else {
        let k = keep.len() as f64;
        (var_num / (k - 1.0).max(1.0) / k).sqrt()
    };
    Ok(UtilityEstimate {
        design: fits.design,
        value,
        std_error,
        n_particles: n,
        n_dropped: dropped,
        n_clipped: clipped,
        n_unconverged: fits.n_unconverged,
        per_particle_log_ratios: Some(lrs),
        ratio_models: None,
    })
}

/// log det of the weighted covariance of `thetas` under normalised
/// `weights`; `None` if the covariance is not positive definite.
pub fn weighted_log_det(thetas: &[Vec<f64>], weights: &[f64]) -> Option<f64> {
    let p = thetas.first()?.len();
    let mut mean = vec![0.0; p];
    for (t, w) in thetas.iter().zip(weights) {
        for j in 0..p {
            mean[j] += w * t[j];
        }
    }
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for (t, w) in thetas.iter().zip(weights) {
        for a in 0..p {
            for b in 0..=a {
                cov[(a, b)] += w * (t[a] - mean[a]) * (t[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let chol = cov.cholesky()?;
    let ld = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    ld.is_finite().then_some(ld)
}

/// log det of the reweighted posterior covariance for every simulated
/// y^(i): particle j is weighted by r̂_j(y^(i)).
fn posterior_log_dets(fits: &DesignFits, cap: f64) -> Vec<f64> {
    let n = fits.models.len();
    let floor = -cap.ln();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let y = fits.observed.row(i);
            let lw: Vec<f64> = fits.models.iter().map(|m| m.eval(y)).collect();
            let max = lw.iter().copied().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return floor;
            }
            let w: Vec<f64> = lw.iter().map(|l| if l.is_finite() { (l - max).exp() } else { 0.0 }).collect();
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / s).collect();
            match weighted_log_det(&fits.thetas, &w) {
                Some(ld) if ld > floor => ld,
                _ => floor,
            }
        })
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = sorted_sum(xs.to_vec()) / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (v / n).sqrt())
}

/// Bayesian D-optimality: aggregated 1 / det of the posterior covariance.
pub fn bd_from_fits(fits: &DesignFits, aggregation: Aggregation, cap: f64) -> UtilityEstimate {
    let lds = posterior_log_dets(fits, cap);
    let capped = lds.iter().filter(|&&l| l <= -cap.ln()).count();
    if capped > 0 {
        debug!("{capped} singular posterior covariances capped at d={}", fits.design);
    }
    let floor = -cap.ln();
    let inv: Vec<f64> = lds.iter().map(|&l| if l <= floor { cap } else { (-l).exp().min(cap) }).collect();
    let (mean, se) = mean_se(&inv);
    let value = match aggregation {
        Aggregation::Median => median(inv),
        Aggregation::Mean => mean,
    };
    UtilityEstimate {
        design: fits.design,
        value,
        std_error: se,
        n_particles: fits.models.len(),
        n_dropped: 0,
        n_clipped: capped,
        n_unconverged: fits.n_unconverged,
        per_particle_log_ratios: None,
        ratio_models: None,
    }
}

/// −mean log det of the posterior covariance.
pub fn bd_stable_from_fits(fits: &DesignFits, cap: f64) -> UtilityEstimate {
    let lds = posterior_log_dets(fits, cap);
    let capped = lds.iter().filter(|&&l| l <= -cap.ln()).count();
    let neg: Vec<f64> = lds.iter().map(|l| -l).collect();
    let (value, std_error) = mean_se(&neg);
    UtilityEstimate {
        design: fits.design,
        value,
        std_error,
        n_particles: fits.models.len(),
        n_dropped: 0,
        n_clipped: capped,
        n_unconverged: fits.n_unconverged,
        per_particle_log_ratios: None,
        ratio_models: None,
    }
}

/// Evaluates `kind` at `design` with the given parameter samples. Weights
/// are only used by the weighted MI estimate.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    kind: UtilityKind,
    design: f64,
    thetas: &[Vec<f64>],
    weights: Option<&[f64]>,
    belief: &ParticleSet,
    model: &ModelSpec,
    cfg: &UtilityConfig,
    seed: SeedNode,
) -> Result<(UtilityEstimate, DesignFits), UtilityError> {
    let fits = fit_at_design(model, design, thetas, belief, &cfg.lfire, seed)?;
    let est = match kind {
        UtilityKind::Mi => mi_from_fits(&fits, None, cfg)?,
        UtilityKind::MiWeighted => mi_from_fits(&fits, weights, cfg)?,
        UtilityKind::BdOpt => bd_from_fits(&fits, cfg.bd_aggregation, cfg.singular_cap),
        UtilityKind::BdOptStable => bd_stable_from_fits(&fits, cfg.singular_cap),
    };
    Ok((est, fits))
}

/// MI at `design` with `n` parameters drawn from the belief.
pub fn estimate_mi(
    design: f64,
    belief: &ParticleSet,
    model: &ModelSpec,
    n: usize,
    seed: SeedNode,
    cfg: &UtilityConfig,
) -> Result<UtilityEstimate, UtilityError> {
    let thetas = belief.sample(n, &mut seed.stream(Stream::BeliefSamples).rng());
    let (mut est, fits) = evaluate(UtilityKind::Mi, design, &thetas, None, belief, model, cfg, seed)?;
    est.ratio_models = Some(fits.models);
    Ok(est)
}

/// MI at `design` using every stored particle, each summand weighted by
/// the particle's current (self-normalised) weight.
pub fn estimate_mi_weighted(
    design: f64,
    belief: &ParticleSet,
    model: &ModelSpec,
    seed: SeedNode,
    cfg: &UtilityConfig,
) -> Result<UtilityEstimate, UtilityError> {
    let w = belief.normalized_weights();
    let (mut est, fits) = evaluate(UtilityKind::MiWeighted, design, &belief.thetas, Some(&w), belief, model, cfg, seed)?;
    est.ratio_models = Some(fits.models);
    Ok(est)
}

pub fn bd_opt(
    design: f64,
    belief: &ParticleSet,
    model: &ModelSpec,
    n: usize,
    seed: SeedNode,
    cfg: &UtilityConfig,
) -> Result<UtilityEstimate, UtilityError> {
    let thetas = belief.sample(n, &mut seed.stream(Stream::BeliefSamples).rng());
    Ok(evaluate(UtilityKind::BdOpt, design, &thetas, None, belief, model, cfg, seed)?.0)
}

pub fn bd_opt_stable(
    design: f64,
    belief: &ParticleSet,
    model: &ModelSpec,
    n: usize,
    seed: SeedNode,
    cfg: &UtilityConfig,
) -> Result<UtilityEstimate, UtilityError> {
    let thetas = belief.sample(n, &mut seed.stream(Stream::BeliefSamples).rng());
    Ok(evaluate(UtilityKind::BdOptStable, design, &thetas, None, belief, model, cfg, seed)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMi {
    pub design: f64,
    pub value: f64,
    pub std_error: f64,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Nested Monte Carlo MI under the prior, using the exact likelihood:
/// (1/N) Σ_i log p(y_i | θ_i) − log (1/M) Σ_j p(y_i | θ_j).
pub fn reference_mi(model: &ModelSpec, design: f64, n: usize, m: usize, seed: SeedNode) -> Result<ReferenceMi, UtilityError> {
    if !model.has_analytic_likelihood() {
        return Err(ModelError::NoAnalyticLikelihood(model.kind()).into());
    }
    let outer = model.sample_prior(n, &mut seed.stream(Stream::Prior).rng());
    let inner = model.sample_prior(m, &mut seed.stream(Stream::Marginal).rng());
    let mut rng = seed.stream(Stream::Likelihood).rng();
    let ys = outer.iter().map(|t| model.simulate(t, design, &mut rng)).collect::<Result<Vec<_>, _>>()?;
    let ln_m = (m as f64).ln();
    let terms: Vec<f64> = outer
        .par_iter()
        .zip(ys.par_iter())
        .map(|(t, y)| -> Result<f64, ModelError> {
            let own = model.log_likelihood(t, design, y)?;
            let others = inner.iter().map(|tj| model.log_likelihood(tj, design, y)).collect::<Result<Vec<_>, _>>()?;
            Ok(own - (log_sum_exp(&others) - ln_m))
        })
        .collect::<Result<_, _>>()?;
    let (value, std_error) = mean_se(&terms);
    Ok(ReferenceMi { design, value, std_error })
}

/// One row of a utility-surface dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub design: f64,
    pub value: f64,
    pub n_dropped: usize,
    pub seed: u64,
}

pub fn surface_csv(rows: &[SurfaceRow]) -> String {
    let mut s = String::from("design,value,n_dropped,seed\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.design, r.value, r.n_dropped, r.seed);
    }
    s
}
