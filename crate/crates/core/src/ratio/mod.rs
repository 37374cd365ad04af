//! Density-ratio estimation by logistic regression (LFIRE).
//!
//! For a fixed parameter θ and design d, samples simulated from the
//! likelihood p(y | θ, d) are classified against samples from the marginal
//! p(y | d). The fitted log-odds, with the class-prior offset removed, is a
//! log-linear estimate of log p(y | θ, d) / p(y | d).

mod logistic;

use std::cmp::Ordering;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::ParticleSet;
use crate::models::{ModelError, ModelSpec};
use crate::rng::Rng;
use crate::serde_float;

use logistic::Design;

#[derive(Debug, Error)]
pub enum RatioError {
    #[error("empty training set")]
    EmptySamples,
    #[error("summary dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite summary value in training data")]
    NonFiniteInput,
    #[error("logistic regression did not converge after {} iterations (|grad| = {:.3e})", .model.diagnostics.iterations, .model.diagnostics.grad_norm)]
    NonConvergence { model: Box<RatioModel> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LfireConfig {
    /// Likelihood samples per ratio fit, including the one shared with the
    /// utility estimate.
    pub n_likelihood: usize,
    /// Marginal samples per design; shared by every fit at that design.
    pub n_marginal: usize,
    /// Fixed penalty; `None` means 1 / (number of training rows).
    pub lambda: Option<f64>,
    pub cross_validate: bool,
    pub cv_folds: usize,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LfireConfig {
    fn default() -> Self {
        Self {
            n_likelihood: 100,
            n_marginal: 100,
            lambda: None,
            cross_validate: false,
            cv_folds: 5,
            max_iter: 100,
            tolerance: 1e-6,
        }
    }
}

const CV_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Row-major matrix of summary vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SummaryMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, RatioError> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::with_capacity(dim, rows.len());
        for r in rows {
            m.push(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<(), RatioError> {
        if row.len() != self.dim {
            return Err(RatioError::DimensionMismatch { expected: self.dim, got: row.len() });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Appends a zeroed row and hands it out for filling in place.
    pub fn push_with(&mut self, fill: impl FnOnce(&mut [f64])) {
        let start = self.data.len();
        self.data.resize(start + self.dim, 0.0);
        fill(&mut self.data[start..]);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Per-feature affine map ψ ↦ (ψ − mean) / scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "serde_float::vec")]
    pub mean: Vec<f64>,
    #[serde(with = "serde_float::vec")]
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Pooled z-score statistics. Returns the scaler and the indices of
    /// zero-variance columns, which keep unit scale.
    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Self, Vec<usize>) {
        let mut mean = vec![0.0; dim];
        let mut n = 0usize;
        for r in rows.clone() {
            n += 1;
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let nf = n as f64;
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut var = vec![0.0; dim];
        for r in rows {
            for j in 0..dim {
                let d = r[j] - mean[j];
                var[j] += d * d;
            }
        }
        let mut scale = Vec::with_capacity(dim);
        let mut dropped = Vec::new();
        for j in 0..dim {
            let sd = (var[j] / nf).sqrt();
            if sd <= 1e-12 * (1.0 + mean[j].abs()) {
                dropped.push(j);
                scale.push(1.0);
            } else {
                scale.push(sd);
            }
        }
        (Self { mean, scale }, dropped)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn apply(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) / self.scale[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Penalised training objective at the returned coefficients.
    pub loss: f64,
    pub lambda: f64,
    pub n_likelihood: usize,
    pub n_marginal: usize,
    pub dropped_features: Vec<usize>,
    /// Mean of exp(log r̂) over the training marginal rows; ≈ 1 for a
    /// well-normalised ratio.
    pub marginal_ratio_mean: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cv_losses: Vec<(f64, f64)>,
}

/// Fitted log-linear ratio for one (θ, d) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioModel {
    pub theta: Vec<f64>,
    pub design: f64,
    /// Intercept first; coefficients act on standardised summaries.
    pub beta: Vec<f64>,
    pub scaler: Standardizer,
    pub diagnostics: FitDiagnostics,
}

impl RatioModel {
    /// A model from explicit coefficients, bypassing training.
    pub fn from_coefficients(beta: Vec<f64>, scaler: Standardizer, theta: Vec<f64>, design: f64) -> Self {
        assert_eq!(beta.len(), scaler.dim() + 1, "beta must carry an intercept");
        Self {
            theta,
            design,
            beta,
            scaler,
            diagnostics: FitDiagnostics {
                converged: true,
                iterations: 0,
                grad_norm: 0.0,
                loss: f64::NAN,
                lambda: 0.0,
                n_likelihood: 0,
                n_marginal: 0,
                dropped_features: Vec::new(),
                marginal_ratio_mean: f64::NAN,
                cv_losses: Vec::new(),
            },
        }
    }

    /// The constant ratio r̂ ≡ 1.
    pub fn unit(dim: usize, theta: Vec<f64>, design: f64) -> Self {
        Self::from_coefficients(vec![0.0; dim + 1], Standardizer::identity(dim), theta, design)
    }

    pub fn summary_dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn log_ratio(&self, summary: &[f64]) -> Result<f64, RatioError> {
        if summary.len() != self.summary_dim() {
            return Err(RatioError::DimensionMismatch { expected: self.summary_dim(), got: summary.len() });
        }
        Ok(self.eval(summary))
    }

    pub(crate) fn eval(&self, summary: &[f64]) -> f64 {
        let mut z = self.beta[0];
        for (j, &v) in summary.iter().enumerate() {
            z += self.beta[j + 1] * self.scaler.apply(j, v);
        }
        z
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn sorted_rows(m: &SummaryMatrix) -> Vec<&[f64]> {
    let mut rows: Vec<&[f64]> = m.rows().collect();
    rows.sort_by(|a, b| lex_cmp(a, b));
    rows
}

struct Assembled {
    x: Vec<f64>,
    y: Vec<f64>,
    p: usize,
}

fn assemble(like: &[&[f64]], marg: &[&[f64]], scaler: &Standardizer) -> Assembled {
    let dim = scaler.dim();
    let p = dim + 1;
    let n = like.len() + marg.len();
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for (rows, label) in [(like, 1.0), (marg, 0.0)] {
        for r in rows {
            x.push(1.0);
            x.extend(r.iter().enumerate().map(|(j, &v)| scaler.apply(j, v)));
            y.push(label);
        }
    }
    Assembled { x, y, p }
}

/// Zero columns for dropped features so their coefficients stay at zero.
fn zero_dropped(a: &mut Assembled, dropped: &[usize]) {
    for row in a.x.chunks_exact_mut(a.p) {
        for &j in dropped {
            row[j + 1] = 0.0;
        }
    }
}

fn split_fold<'a>(rows: &[&'a [f64]], folds: usize, f: usize) -> (Vec<&'a [f64]>, Vec<&'a [f64]>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in rows.iter().enumerate() {
        if i % folds == f {
            test.push(*r);
        } else {
            train.push(*r);
        }
    }
    (train, test)
}

fn cv_select(
    like: &[&[f64]],
    marg: &[&[f64]],
    scaler: &Standardizer,
    dropped: &[usize],
    base: f64,
    cfg: &LfireConfig,
) -> (f64, Vec<(f64, f64)>) {
    let folds = cfg.cv_folds.max(2);
    let mut scores = Vec::with_capacity(CV_GRID.len());
    for mult in CV_GRID {
        let lambda = base * mult;
        let mut total = 0.0;
        let mut count = 0usize;
        for f in 0..folds {
            let (ltr, lte) = split_fold(like, folds, f);
            let (mtr, mte) = split_fold(marg, folds, f);
            if ltr.is_empty() || mtr.is_empty() || lte.is_empty() && mte.is_empty() {
                continue;
            }
            let mut train = assemble(&ltr, &mtr, scaler);
            zero_dropped(&mut train, dropped);
            let beta = match logistic::fit(
                &Design { x: &train.x, y: &train.y, p: train.p },
                lambda,
                cfg.max_iter,
                cfg.tolerance,
            ) {
                Ok(s) => s.beta,
                Err(s) => s.beta,
            };
            let mut test = assemble(&lte, &mte, scaler);
            zero_dropped(&mut test, dropped);
            let d = Design { x: &test.x, y: &test.y, p: test.p };
            total += logistic::mean_loss(&d, &beta) * d.n() as f64;
            count += d.n();
        }
        scores.push((lambda, total / count.max(1) as f64));
    }
    let best = scores
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(base, |(l, _)| l);
    (best, scores)
}

/// Fits the ratio model for (θ, d) from likelihood rows (label 1) and
/// marginal rows (label 0).
///
/// Rows are put in a canonical order before fitting, so the result does
/// not depend on the order in which samples were supplied.
pub fn train_ratio(
    theta: &[f64],
    design: f64,
    likelihood: &SummaryMatrix,
    marginal: &SummaryMatrix,
    cfg: &LfireConfig,
) -> Result<RatioModel, RatioError> {
    if likelihood.is_empty() || marginal.is_empty() {
        return Err(RatioError::EmptySamples);
    }
    if likelihood.dim() != marginal.dim() {
        return Err(RatioError::DimensionMismatch { expected: likelihood.dim(), got: marginal.dim() });
    }
    if likelihood.data.iter().chain(&marginal.data).any(|v| !v.is_finite()) {
        return Err(RatioError::NonFiniteInput);
    }
    let dim = likelihood.dim();
    let like = sorted_rows(likelihood);
    let marg = sorted_rows(marginal);
    let (n1, n0) = (like.len(), marg.len());

    let (scaler, dropped) = Standardizer::fit(like.iter().chain(marg.iter()).copied(), dim);
    if !dropped.is_empty() {
        warn!("ratio fit at d={design}: dropped zero-variance features {dropped:?}");
    }

    let base = cfg.lambda.unwrap_or(1.0 / (n1 + n0) as f64);
    let (lambda, cv_losses) = if cfg.cross_validate {
        cv_select(&like, &marg, &scaler, &dropped, base, cfg)
    } else {
        (base, Vec::new())
    };

    let mut data = assemble(&like, &marg, &scaler);
    zero_dropped(&mut data, &dropped);
    let design_view = Design { x: &data.x, y: &data.y, p: data.p };
    let (mut beta, converged, iterations, grad_norm) =
        match logistic::fit(&design_view, lambda, cfg.max_iter, cfg.tolerance) {
            Ok(s) => (s.beta, true, s.iterations, s.grad_norm),
            Err(s) => (s.beta, false, s.iterations, s.grad_norm),
        };
    let loss = logistic::objective(&design_view, &beta, lambda);
    beta[0] -= (n1 as f64 / n0 as f64).ln();

    let mut model = RatioModel {
        theta: theta.to_vec(),
        design,
        beta,
        scaler,
        diagnostics: FitDiagnostics {
            converged,
            iterations,
            grad_norm,
            loss,
            lambda,
            n_likelihood: n1,
            n_marginal: n0,
            dropped_features: dropped,
            marginal_ratio_mean: 0.0,
            cv_losses,
        },
    };
    model.diagnostics.marginal_ratio_mean = marg.iter().map(|r| model.eval(r).exp()).sum::<f64>() / n0 as f64;

    if converged {
        Ok(model)
    } else {
        Err(RatioError::NonConvergence { model: Box::new(model) })
    }
}

/// `train_ratio`, but a fit that stalls short of the tolerance still yields
/// its last iterate (flagged in the diagnostics).
pub fn train_ratio_lenient(
    theta: &[f64],
    design: f64,
    likelihood: &SummaryMatrix,
    marginal: &SummaryMatrix,
    cfg: &LfireConfig,
) -> Result<RatioModel, RatioError> {
    match train_ratio(theta, design, likelihood, marginal, cfg) {
        Err(RatioError::NonConvergence { model }) => {
            warn!(
                "ratio fit at d={design} stopped at |grad| = {:.3e}; using last iterate",
                model.diagnostics.grad_norm
            );
            Ok(*model)
        }
        other => other,
    }
}

/// Appends `n` simulated summaries at (θ, d).
pub fn simulate_summaries(
    model: &ModelSpec,
    theta: &[f64],
    design: f64,
    n: usize,
    out: &mut SummaryMatrix,
    rng: &mut Rng,
) -> Result<(), ModelError> {
    for _ in 0..n {
        let obs = model.simulate(theta, design, rng)?;
        out.push_with(|row| model.summarize_into(&obs, row));
    }
    Ok(())
}

/// Marginal summaries at `design`: parameters drawn from the belief by
/// categorical sampling, each pushed through the simulator once.
pub fn sample_marginal(
    design: f64,
    belief: &ParticleSet,
    m: usize,
    model: &ModelSpec,
    rng: &mut Rng,
) -> Result<SummaryMatrix, ModelError> {
    let thetas = belief.sample(m, rng);
    let mut out = SummaryMatrix::with_capacity(model.summary_dim(), m);
    for theta in &thetas {
        simulate_summaries(model, theta, design, 1, &mut out, rng)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Rng, SeedNode};
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    fn gaussian_rows(mu: f64, n: usize, rng: &mut Rng) -> SummaryMatrix {
        let dist = Normal::new(mu, 1.0).unwrap();
        let mut m = SummaryMatrix::new(2);
        for _ in 0..n {
            let y: f64 = dist.sample(rng);
            m.push(&[y, y * y]).unwrap();
        }
        m
    }

    fn cfg() -> LfireConfig {
        LfireConfig::default()
    }

    #[test]
    fn gaussian_log_ratio_matches_closed_form() {
        let mut rng = SeedNode::new(11).rng();
        let like = gaussian_rows(1.0, 2000, &mut rng);
        let marg = gaussian_rows(0.0, 2000, &mut rng);
        let model = train_ratio(&[1.0], 0.0, &like, &marg, &cfg()).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| -2.0 + 5.0 * f64::from(i) / 100.0).collect();
        let mae = grid
            .iter()
            .map(|&y| (model.log_ratio(&[y, y * y]).unwrap() - (y - 0.5)).abs())
            .sum::<f64>()
            / grid.len() as f64;
        assert!(mae < 0.15, "mae {mae}");
        let at0 = model.log_ratio(&[0.0, 0.0]).unwrap();
        assert!((at0 + 0.5).abs() < 0.15, "log r(0) = {at0}");
        assert!(model.diagnostics.converged);
        assert!(model.diagnostics.grad_norm <= 1e-6);
    }

    #[test]
    fn identical_distributions_give_flat_ratio() {
        let mut rng = SeedNode::new(12).rng();
        let like = gaussian_rows(0.0, 1000, &mut rng);
        let marg = gaussian_rows(0.0, 1000, &mut rng);
        let model = train_ratio(&[0.0], 0.0, &like, &marg, &cfg()).unwrap();
        assert!(model.beta[1..].iter().all(|b| b.abs() < 0.2), "{:?}", model.beta);
        let held = gaussian_rows(0.0, 500, &mut rng);
        let mean_abs = held.rows().map(|r| model.log_ratio(r).unwrap().abs()).sum::<f64>() / 500.0;
        assert!(mean_abs < 0.1, "{mean_abs}");
    }

    #[test]
    fn separable_sets_stay_finite() {
        let like = SummaryMatrix::from_rows(&[[5.0], [6.0], [7.0], [8.0]]).unwrap();
        let marg = SummaryMatrix::from_rows(&[[-5.0], [-6.0], [-7.0], [-8.0]]).unwrap();
        let model = train_ratio(&[0.0], 0.0, &like, &marg, &cfg()).unwrap();
        assert!(model.beta.iter().all(|b| b.is_finite()));
        assert!(model.log_ratio(&[6.0]).unwrap() > 0.0);
        assert!(model.log_ratio(&[-6.0]).unwrap() < 0.0);
    }

    #[test]
    fn dot_product_with_identity_scaler() {
        let m = RatioModel::from_coefficients(vec![0.0, 1.0, 0.0, 0.0], Standardizer::identity(3), vec![], 0.0);
        assert_eq!(m.log_ratio(&[2.0, 4.0, 8.0]).unwrap(), 2.0);
        let z = RatioModel::unit(3, vec![], 0.0);
        assert_eq!(z.log_ratio(&[1.0, -7.0, 3.5]).unwrap(), 0.0);
        assert!(matches!(
            m.log_ratio(&[1.0, 2.0]),
            Err(RatioError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn constant_feature_is_dropped() {
        let mut rng = SeedNode::new(13).rng();
        let mut like = SummaryMatrix::new(2);
        let mut marg = SummaryMatrix::new(2);
        let n1 = Normal::new(1.0, 1.0).unwrap();
        let n0 = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..300 {
            like.push(&[n1.sample(&mut rng), 3.0]).unwrap();
            marg.push(&[n0.sample(&mut rng), 3.0]).unwrap();
        }
        let model = train_ratio(&[0.0], 0.0, &like, &marg, &cfg()).unwrap();
        assert_eq!(model.diagnostics.dropped_features, vec![1]);
        assert_eq!(model.beta[2], 0.0);
        assert!(model.beta[1] > 0.0);
    }

    #[test]
    fn marginal_normalisation_diagnostic() {
        let mut rng = SeedNode::new(14).rng();
        let like = gaussian_rows(0.7, 400, &mut rng);
        let marg = gaussian_rows(0.0, 400, &mut rng);
        let model = train_ratio(&[0.0], 0.0, &like, &marg, &cfg()).unwrap();
        let held = gaussian_rows(0.0, 2000, &mut rng);
        let m = held.rows().map(|r| model.log_ratio(r).unwrap().exp()).sum::<f64>() / 2000.0;
        assert!((0.5..=2.0).contains(&m), "{m}");
        assert!((0.5..=2.0).contains(&model.diagnostics.marginal_ratio_mean));
    }

    #[test]
    fn cross_validation_picks_from_grid() {
        let mut rng = SeedNode::new(15).rng();
        let like = gaussian_rows(1.0, 200, &mut rng);
        let marg = gaussian_rows(0.0, 200, &mut rng);
        let c = LfireConfig { cross_validate: true, ..cfg() };
        let model = train_ratio(&[0.0], 0.0, &like, &marg, &c).unwrap();
        assert_eq!(model.diagnostics.cv_losses.len(), 5);
        let base = 1.0 / 400.0;
        assert!(CV_GRID.iter().any(|m| (m * base - model.diagnostics.lambda).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = SummaryMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let b = SummaryMatrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(train_ratio(&[], 0.0, &a, &b, &cfg()), Err(RatioError::DimensionMismatch { .. })));
        assert!(matches!(
            train_ratio(&[], 0.0, &SummaryMatrix::new(1), &b, &cfg()),
            Err(RatioError::EmptySamples)
        ));
    }

    #[test]
    fn more_data_does_not_hurt_held_out_loss() {
        let mut worse = 0;
        for seed in 0..20u64 {
            let mut rng = SeedNode::new(100 + seed).rng();
            let small_l = gaussian_rows(0.5, 100, &mut rng);
            let small_m = gaussian_rows(0.0, 100, &mut rng);
            let mut big_l = small_l.clone();
            let mut big_m = small_m.clone();
            for r in gaussian_rows(0.5, 100, &mut rng).rows() {
                big_l.push(r).unwrap();
            }
            for r in gaussian_rows(0.0, 100, &mut rng).rows() {
                big_m.push(r).unwrap();
            }
            let test_l = gaussian_rows(0.5, 1000, &mut rng);
            let test_m = gaussian_rows(0.0, 1000, &mut rng);
            let loss = |m: &RatioModel| {
                let lp = test_l.rows().map(|r| logistic::softplus(-m.eval(r))).sum::<f64>();
                let lm = test_m.rows().map(|r| logistic::softplus(m.eval(r))).sum::<f64>();
                (lp + lm) / 2000.0
            };
            let a = loss(&train_ratio(&[], 0.0, &small_l, &small_m, &cfg()).unwrap());
            let b = loss(&train_ratio(&[], 0.0, &big_l, &big_m, &cfg()).unwrap());
            if b > a + 0.01 {
                worse += 1;
            }
        }
        assert!(worse <= 2, "{worse} of 20 seeds got worse");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn row_order_does_not_matter(seed in any::<u64>()) {
            let mut rng = SeedNode::new(seed).rng();
            let like = gaussian_rows(0.8, 60, &mut rng);
            let marg = gaussian_rows(0.0, 60, &mut rng);
            let shuffle = |m: &SummaryMatrix, rng: &mut Rng| {
                let mut rows: Vec<Vec<f64>> = m.rows().map(<[f64]>::to_vec).collect();
                rows.shuffle(rng);
                SummaryMatrix::from_rows(&rows).unwrap()
            };
            let a = train_ratio(&[0.0], 0.0, &like, &marg, &cfg()).unwrap();
            let b = train_ratio(&[0.0], 0.0, &shuffle(&like, &mut rng), &shuffle(&marg, &mut rng), &cfg()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
