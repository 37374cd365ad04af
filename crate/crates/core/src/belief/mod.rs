//! Weighted particle representation of the current belief.

mod kdtree;

use log::{info, warn};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratio::RatioModel;
use crate::rng::Rng;
use crate::serde_float;

pub use kdtree::KdTree;

#[derive(Debug, Error, PartialEq)]
pub enum BeliefError {
    #[error("all particle weights are zero")]
    AllWeightsZero,
    #[error("negative or non-finite weight at index {0}")]
    InvalidWeight(usize),
    #[error("expected {expected} ratio models, got {got}")]
    RatioCount { expected: usize, got: usize },
    #[error("need at least {need} particles, have {have}")]
    TooFewParticles { need: usize, have: usize },
    #[error("particle {index} lies outside the prior support")]
    OutOfSupport { index: usize },
}

/// (Σw)² / Σw² of linear weights.
pub fn ess(weights: &[f64]) -> Result<f64, BeliefError> {
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(BeliefError::InvalidWeight(i));
    }
    let s: f64 = weights.iter().sum();
    if s <= 0.0 {
        return Err(BeliefError::AllWeightsZero);
    }
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    Ok(s * s / s2)
}

/// Weights rescaled so the largest is 1; `None` if every log-weight is -inf.
fn relative_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    Some(log_w.iter().map(|l| (l - max).exp()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub thetas: Vec<Vec<f64>>,
    /// Unnormalised log-weights; `-inf` marks a zero weight.
    #[serde(with = "serde_float::vec")]
    pub log_weights: Vec<f64>,
    pub iteration: usize,
    /// Prior support per parameter dimension.
    #[serde(with = "serde_float::pairs")]
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    /// Particles whose ratio evaluated to a non-finite value.
    pub zeroed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub ess_before: f64,
    pub delta: f64,
    pub sigma: f64,
    /// Draws that exhausted the rejection budget and reused the centre.
    pub fallbacks: usize,
}

impl ParticleSet {
    /// Equally weighted particles (all weights 1).
    pub fn uniform(thetas: Vec<Vec<f64>>, bounds: Vec<(f64, f64)>) -> Self {
        let n = thetas.len();
        Self { thetas, log_weights: vec![0.0; n], iteration: 0, bounds }
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Linear weights scaled so the largest is 1.
    pub fn weights(&self) -> Vec<f64> {
        relative_weights(&self.log_weights).unwrap_or_else(|| vec![0.0; self.len()])
    }

    /// Weights summing to 1.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let w = self.weights();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.iter().map(|x| x / s).collect()
        } else {
            w
        }
    }

    pub fn ess(&self) -> Result<f64, BeliefError> {
        ess(&self.weights())
    }

    /// Checks weight and support invariants.
    pub fn validate(&self) -> Result<(), BeliefError> {
        if let Some(i) = self.log_weights.iter().position(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(BeliefError::InvalidWeight(i));
        }
        self.ess()?;
        for (index, th) in self.thetas.iter().enumerate() {
            let inside = th.len() == self.dim() && th.iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi);
            if !inside {
                return Err(BeliefError::OutOfSupport { index });
            }
        }
        Ok(())
    }

    fn categorical(&self) -> Result<WeightedIndex<f64>, BeliefError> {
        let w = relative_weights(&self.log_weights).ok_or(BeliefError::AllWeightsZero)?;
        WeightedIndex::new(&w).map_err(|_| BeliefError::AllWeightsZero)
    }

    /// Indices drawn with replacement in proportion to the weights.
    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        let dist = self.categorical().expect("belief has no positive weight");
        (0..n).map(|_| dist.sample(rng)).collect()
    }

    /// Parameter draws from the belief.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        self.sample_indices(n, rng).into_iter().map(|i| self.thetas[i].clone()).collect()
    }

    /// Multiplies each weight by its particle's ratio at the observed
    /// summary. Non-finite ratios zero the weight.
    pub fn update_weights(&mut self, ratios: &[RatioModel], observed: &[f64]) -> Result<UpdateReport, BeliefError> {
        if ratios.len() != self.len() {
            return Err(BeliefError::RatioCount { expected: self.len(), got: ratios.len() });
        }
        let mut next = self.log_weights.clone();
        let mut report = UpdateReport::default();
        for (i, (lw, model)) in next.iter_mut().zip(ratios).enumerate() {
            match model.log_ratio(observed) {
                Ok(l) if l.is_finite() => *lw += l,
                _ => {
                    *lw = f64::NEG_INFINITY;
                    report.zeroed.push(i);
                }
            }
        }
        if !report.zeroed.is_empty() {
            warn!("weight update zeroed {} particles with non-finite ratios", report.zeroed.len());
        }
        if relative_weights(&next).is_none() {
            return Err(BeliefError::AllWeightsZero);
        }
        self.log_weights = next;
        Ok(report)
    }

    /// Truncated mixture-of-Gaussians resampling in the unit cube. Weights
    /// are reset to 1.
    pub fn resample(&mut self, max_attempts: usize, rng: &mut Rng) -> Result<ResampleReport, BeliefError> {
        let n = self.len();
        if n < 2 {
            return Err(BeliefError::TooFewParticles { need: 2, have: n });
        }
        let ess_before = self.ess()?;
        let dist = self.categorical()?;
        let (unit, unit_bounds, scaler) = transform_unit(&self.thetas, &self.bounds);
        let delta = nn_median_distance(&unit);
        let sigma = mog_sigma(delta);
        let dim = self.dim();
        let inside = |x: &[f64]| x.iter().zip(&unit_bounds).all(|(v, (lo, hi))| v >= lo && v <= hi);

        let mut fallbacks = 0;
        let mut fresh = Vec::with_capacity(n);
        let mut cand = vec![0.0; dim];
        for _ in 0..n {
            let centre = &unit[dist.sample(rng)];
            let mut accepted = false;
            for _ in 0..max_attempts {
                for (c, m) in cand.iter_mut().zip(centre) {
                    let z: f64 = StandardNormal.sample(rng);
                    *c = m + sigma * z;
                }
                if inside(&cand) {
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                fallbacks += 1;
                cand.copy_from_slice(centre);
            }
            fresh.push(cand.clone());
        }
        if fallbacks > 0 {
            warn!("resampling fell back to the mixture centre for {fallbacks} draws");
        }

        let mut thetas = scaler.inverse(&fresh);
        for th in &mut thetas {
            for (v, (lo, hi)) in th.iter_mut().zip(&self.bounds) {
                *v = v.clamp(*lo, *hi);
            }
        }
        self.thetas = thetas;
        self.log_weights = vec![0.0; n];
        info!("resampled {n} particles (ess {ess_before:.1}, delta {delta:.3e}, sigma {sigma:.3e})");
        Ok(ResampleReport { ess_before, delta, sigma, fallbacks })
    }
}

/// Kernel width from the median nearest-neighbour distance.
pub fn mog_sigma(delta: f64) -> f64 {
    if delta > 0.0 {
        delta.sqrt()
    } else {
        1e-3
    }
}

/// Per-dimension affine map onto the sample range.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitScaler {
    pub lo: Vec<f64>,
    pub range: Vec<f64>,
}

impl UnitScaler {
    pub fn forward(&self, thetas: &[Vec<f64>]) -> Vec<Vec<f64>> {
        thetas
            .iter()
            .map(|t| t.iter().zip(self.lo.iter().zip(&self.range)).map(|(v, (lo, r))| (v - lo) / r).collect())
            .collect()
    }

    pub fn inverse(&self, unit: &[Vec<f64>]) -> Vec<Vec<f64>> {
        unit.iter()
            .map(|t| t.iter().zip(self.lo.iter().zip(&self.range)).map(|(v, (lo, r))| v * r + lo).collect())
            .collect()
    }
}

/// Maps samples and bounds so the samples span [0, 1] in every dimension.
/// A dimension with zero sample range is left unscaled.
pub fn transform_unit(thetas: &[Vec<f64>], bounds: &[(f64, f64)]) -> (Vec<Vec<f64>>, Vec<(f64, f64)>, UnitScaler) {
    let dim = bounds.len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for t in thetas {
        for j in 0..dim {
            lo[j] = lo[j].min(t[j]);
            hi[j] = hi[j].max(t[j]);
        }
    }
    let mut range = Vec::with_capacity(dim);
    for j in 0..dim {
        let r = hi[j] - lo[j];
        if r > 0.0 && r.is_finite() {
            range.push(r);
        } else {
            warn!("parameter dimension {j} has zero sample range; leaving it unscaled");
            lo[j] = 0.0;
            range.push(1.0);
        }
    }
    let scaler = UnitScaler { lo, range };
    let unit_bounds = bounds
        .iter()
        .enumerate()
        .map(|(j, (a, b))| ((a - scaler.lo[j]) / scaler.range[j], (b - scaler.lo[j]) / scaler.range[j]))
        .collect();
    (scaler.forward(thetas), unit_bounds, scaler)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
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

/// Nearest-neighbour distance of every point, by exhaustive scan.
pub fn nn_distances_pairwise(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut best = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dist2(&points[i], &points[j]);
            best[i] = best[i].min(d);
            best[j] = best[j].min(d);
        }
    }
    best.into_iter().map(f64::sqrt).collect()
}

/// Nearest-neighbour distance of every point, by KD-tree queries.
pub fn nn_distances_kdtree(points: &[Vec<f64>]) -> Vec<f64> {
    let tree = KdTree::build(points);
    (0..points.len()).map(|i| tree.nearest_excluding(&points[i], i).1.sqrt()).collect()
}

/// Median over points of the distance to the nearest other point.
pub fn nn_median_distance(points: &[Vec<f64>]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let d = if points.len() <= 2000 { nn_distances_pairwise(points) } else { nn_distances_kdtree(points) };
    median(d)
}
