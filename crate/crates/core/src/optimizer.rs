//! Bayesian optimisation of a noisy scalar utility over a one-dimensional
//! design domain.
//!
//! The surrogate is a zero-mean GP with a Matérn-5/2 kernel on inputs
//! scaled to [0, 1] and z-scored targets. Hyperparameters (lengthscale,
//! signal variance, noise variance) are fitted in log space by multi-start
//! projected gradient ascent on the log marginal likelihood.

use std::fmt::Display;

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::models::DesignDomain;
use crate::rng::Rng;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Log-space bounds for (lengthscale, signal variance, noise variance).
const LOG_BOUNDS: [(f64, f64); 3] = [
    (-4.605_170_185_988_091, 2.302_585_092_994_046), // [0.01, 10]
    (-6.907_755_278_982_137, 6.907_755_278_982_137), // [1e-3, 1e3]
    (-13.815_510_557_964_274, 2.302_585_092_994_046), // [1e-6, 10]
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    fn from_log(p: [f64; 3]) -> Self {
        Self { lengthscale: p[0].exp(), signal_var: p[1].exp(), noise_var: p[2].exp() }
    }
}

/// s² (1 + √5 r/ℓ + 5r²/3ℓ²) exp(−√5 r/ℓ).
pub fn matern52(x: f64, x2: f64, lengthscale: f64, signal_var: f64) -> f64 {
    let u = SQRT5 * (x - x2).abs() / lengthscale;
    signal_var * (1.0 + u + u * u / 3.0) * (-u).exp()
}

/// d k / d log ℓ.
fn matern52_dlog_l(x: f64, x2: f64, lengthscale: f64, signal_var: f64) -> f64 {
    let u = SQRT5 * (x - x2).abs() / lengthscale;
    signal_var * u * u * (1.0 + u) * (-u).exp() / 3.0
}

fn kernel_matrix(x: &[f64], h: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        matern52(x[i], x[j], h.lengthscale, h.signal_var) + if i == j { h.noise_var } else { 0.0 }
    })
}

/// Log marginal likelihood and its gradient in (log ℓ, log s², log σn²).
pub fn log_marginal_likelihood(x: &[f64], y: &[f64], log_params: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let h = GpHyper::from_log(log_params);
    let n = x.len();
    let chol = kernel_matrix(x, &h).cholesky()?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let kinv = chol.inverse();
    // ½ tr((ααᵀ − K⁻¹) ∂K)
    let mut grad = [0.0; 3];
    for i in 0..n {
        for j in 0..n {
            let a = alpha[i] * alpha[j] - kinv[(i, j)];
            let dl = matern52_dlog_l(x[i], x[j], h.lengthscale, h.signal_var);
            let ds = matern52(x[i], x[j], h.lengthscale, h.signal_var);
            grad[0] += a * dl;
            grad[1] += a * ds;
            if i == j {
                grad[2] += a * h.noise_var;
            }
        }
    }
    for g in &mut grad {
        *g *= 0.5;
    }
    lml.is_finite().then_some((lml, grad))
}

fn project(p: [f64; 3]) -> [f64; 3] {
    let mut q = p;
    for (v, (lo, hi)) in q.iter_mut().zip(LOG_BOUNDS) {
        *v = v.clamp(lo, hi);
    }
    q
}

fn ascend(x: &[f64], y: &[f64], start: [f64; 3]) -> Option<([f64; 3], f64)> {
    let mut p = project(start);
    let (mut f, mut g) = log_marginal_likelihood(x, y, p)?;
    let mut step = 0.5;
    for _ in 0..200 {
        let mut improved = false;
        while step > 1e-10 {
            let q = project([p[0] + step * g[0], p[1] + step * g[1], p[2] + step * g[2]]);
            if let Some((fq, gq)) = log_marginal_likelihood(x, y, q) {
                if fq > f {
                    let gain = fq - f;
                    p = q;
                    f = fq;
                    g = gq;
                    improved = gain > 1e-10;
                    step *= 2.0;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Some((p, f))
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    lo: f64,
    width: f64,
    x: Vec<f64>,
    y_mean: f64,
    y_sd: f64,
    pub hyper: GpHyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpSurrogate {
    /// Conditions a GP with fixed hyperparameters on raw data.
    pub fn with_hyper(xs: &[f64], ys: &[f64], lo: f64, hi: f64, hyper: GpHyper) -> Option<Self> {
        let width = if hi > lo { hi - lo } else { 1.0 };
        let x: Vec<f64> = xs.iter().map(|v| (v - lo) / width).collect();
        let n = ys.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        let y_sd = if sd > 0.0 { sd } else { 1.0 };
        let yz: Vec<f64> = ys.iter().map(|v| (v - y_mean) / y_sd).collect();
        Self::from_scaled(x, &yz, lo, width, y_mean, y_sd, hyper)
    }

    fn from_scaled(x: Vec<f64>, yz: &[f64], lo: f64, width: f64, y_mean: f64, y_sd: f64, hyper: GpHyper) -> Option<Self> {
        let chol = kernel_matrix(&x, &hyper).cholesky()?;
        let alpha = chol.solve(&DVector::from_column_slice(yz));
        Some(Self { lo, width, x, y_mean, y_sd, hyper, chol, alpha })
    }

    /// Fits hyperparameters by maximising the marginal likelihood from
    /// `restarts` starting points, then conditions on the data.
    pub fn fit(xs: &[f64], ys: &[f64], lo: f64, hi: f64, restarts: usize, rng: &mut Rng) -> Self {
        let width = if hi > lo { hi - lo } else { 1.0 };
        let x: Vec<f64> = xs.iter().map(|v| (v - lo) / width).collect();
        let n = ys.len() as f64;
        let y_mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        let y_sd = if sd > 0.0 { sd } else { 1.0 };
        let yz: Vec<f64> = ys.iter().map(|v| (v - y_mean) / y_sd).collect();

        let mut best: Option<([f64; 3], f64)> = None;
        for r in 0..restarts.max(1) {
            let start = if r == 0 {
                [0.2f64.ln(), 0.0, 0.01f64.ln()]
            } else {
                [
                    rng.random_range(LOG_BOUNDS[0].0..LOG_BOUNDS[0].1 - 1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-9.0..-1.0),
                ]
            };
            if let Some((p, f)) = ascend(&x, &yz, start) {
                if best.is_none_or(|(_, bf)| f > bf) {
                    best = Some((p, f));
                }
            }
        }
        if let Some(s) = best.and_then(|(p, _)| Self::from_scaled(x.clone(), &yz, lo, width, y_mean, y_sd, GpHyper::from_log(p))) {
            return s;
        }
        warn!("GP hyperparameter search failed; using median-distance lengthscale");
        let mut d: Vec<f64> = Vec::new();
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                d.push((x[i] - x[j]).abs());
            }
        }
        d.sort_by(f64::total_cmp);
        let ell = d.get(d.len() / 2).copied().unwrap_or(0.2).max(0.01);
        let mut noise = 1e-6;
        loop {
            let h = GpHyper { lengthscale: ell, signal_var: 1.0, noise_var: noise };
            if let Some(s) = Self::from_scaled(x.clone(), &yz, lo, width, y_mean, y_sd, h) {
                return s;
            }
            noise *= 10.0;
        }
    }

    /// Predictive mean and variance of the latent function, in raw units.
    pub fn predict(&self, design: f64) -> (f64, f64) {
        let xs = (design - self.lo) / self.width;
        let h = &self.hyper;
        let k = DVector::from_iterator(self.x.len(), self.x.iter().map(|&xi| matern52(xs, xi, h.lengthscale, h.signal_var)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = (h.signal_var - k.dot(&v)).max(0.0);
        (self.y_mean + self.y_sd * mean, var * self.y_sd * self.y_sd)
    }
}

/// (m − best) Φ(z) + s φ(z) with z = (m − best) / s.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let diff = mean - best;
    if std <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / std;
    let n = Normal::standard();
    (diff * n.cdf(z) + std * n.pdf(z)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    /// Utility evaluations; `None` means 30 on intervals and 25 on grids.
    pub budget: Option<usize>,
    pub n_init: usize,
    pub restarts: usize,
    pub ei_seeds: usize,
    pub grid_points: usize,
    pub duplicate_tol: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self { budget: None, n_init: 5, restarts: 5, ei_seeds: 50, grid_points: 200, duplicate_tol: 1e-6 }
    }
}

impl BoConfig {
    pub fn budget_for(&self, domain: &DesignDomain) -> usize {
        self.budget.unwrap_or(if domain.is_discrete() { 25 } else { 30 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub design: f64,
    pub value: Option<f64>,
    /// Surrogate prediction and EI at the design before it was evaluated;
    /// absent for the initial designs.
    pub gp_mean: Option<f64>,
    pub gp_var: Option<f64>,
    pub ei: Option<f64>,
    pub attempts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub design: f64,
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    /// Maximiser of the final GP mean.
    pub design: f64,
    /// Best evaluated design and its value.
    pub raw_best: (f64, f64),
    pub trace: Vec<TraceStep>,
    pub grid: Vec<GridPoint>,
    pub hyper: Option<GpHyper>,
}

#[derive(Debug, thiserror::Error)]
pub enum BoError {
    #[error("every utility evaluation failed")]
    NoEvaluations,
}

fn initial_designs(domain: &DesignDomain, n: usize, rng: &mut Rng) -> Vec<f64> {
    match domain {
        DesignDomain::Grid { .. } => {
            let (lo, hi) = (domain.lower(), domain.upper());
            let mut out: Vec<f64> = (0..n)
                .map(|i| if n == 1 { lo } else { (lo + (hi - lo) * i as f64 / (n - 1) as f64).round() })
                .collect();
            out.dedup();
            out
        }
        DesignDomain::Interval { lo, hi } => {
            // one uniform draw per stratum
            (0..n).map(|i| lo + (hi - lo) * (i as f64 + rng.random::<f64>()) / n as f64).collect()
        }
    }
}

/// Pattern search for the EI maximum from one seed.
fn local_max(f: &impl Fn(f64) -> f64, start: f64, lo: f64, hi: f64) -> (f64, f64) {
    let mut x = start;
    let mut fx = f(x);
    let mut step = 0.02 * (hi - lo);
    while step > 1e-9 * (hi - lo).max(1.0) {
        let mut moved = false;
        for c in [x - step, x + step] {
            let c = c.clamp(lo, hi);
            let fc = f(c);
            if fc > fx {
                x = c;
                fx = fc;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

fn mean_argmax(gp: &GpSurrogate, domain: &DesignDomain, grid_points: usize) -> f64 {
    let by_mean = |a: &f64, b: &f64| gp.predict(*a).0.total_cmp(&gp.predict(*b).0);
    match domain {
        DesignDomain::Grid { .. } => domain.members().into_iter().max_by(by_mean).unwrap_or(domain.lower()),
        DesignDomain::Interval { lo, hi } => {
            let coarse = domain.linspace(grid_points.max(2)).into_iter().max_by(by_mean).unwrap_or(*lo);
            local_max(&|x| gp.predict(x).0, coarse, *lo, *hi).0
        }
    }
}

/// Maximises `utility` over `domain`. The callback receives the design and
/// the attempt number (0 or 1); a failed evaluation is retried once, then
/// skipped.
pub fn bo_optimize<E: Display>(
    mut utility: impl FnMut(f64, usize) -> Result<f64, E>,
    domain: &DesignDomain,
    cfg: &BoConfig,
    rng: &mut Rng,
) -> Result<BoResult, BoError> {
    let budget = cfg.budget_for(domain).max(1);
    let (lo, hi) = (domain.lower(), domain.upper());
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut tried: Vec<f64> = Vec::new();
    let mut trace = Vec::with_capacity(budget);

    let mut run = |d: f64, pred: Option<(f64, f64, f64)>, xs: &mut Vec<f64>, ys: &mut Vec<f64>, trace: &mut Vec<TraceStep>| {
        let mut value = None;
        let mut attempts = 0;
        for attempt in 0..2 {
            attempts += 1;
            match utility(d, attempt) {
                Ok(v) if v.is_finite() => {
                    value = Some(v);
                    break;
                }
                Ok(v) => warn!("utility at d={d} returned {v}"),
                Err(e) => warn!("utility at d={d} failed: {e}"),
            }
        }
        if let Some(v) = value {
            xs.push(d);
            ys.push(v);
        }
        trace.push(TraceStep {
            step: trace.len(),
            design: d,
            value,
            gp_mean: pred.map(|p| p.0),
            gp_var: pred.map(|p| p.1),
            ei: pred.map(|p| p.2),
            attempts,
        });
    };

    for d in initial_designs(domain, cfg.n_init.min(budget), rng) {
        tried.push(d);
        run(d, None, &mut xs, &mut ys, &mut trace);
    }

    let is_dup = |tried: &[f64], d: f64| {
        if domain.is_discrete() {
            tried.contains(&d)
        } else {
            tried.iter().any(|t| (t - d).abs() <= cfg.duplicate_tol)
        }
    };

    while trace.len() < budget {
        if xs.len() < 2 {
            // not enough data for a surrogate: fill with random designs
            let d = match domain {
                DesignDomain::Grid { .. } => {
                    let free: Vec<f64> = domain.members().into_iter().filter(|m| !is_dup(&tried, *m)).collect();
                    if free.is_empty() {
                        break;
                    }
                    free[rng.random_range(0..free.len())]
                }
                DesignDomain::Interval { .. } => rng.random_range(lo..=hi),
            };
            tried.push(d);
            run(d, None, &mut xs, &mut ys, &mut trace);
            continue;
        }
        let surrogate = GpSurrogate::fit(&xs, &ys, lo, hi, cfg.restarts, rng);
        let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ei = |d: f64| {
            let (m, v) = surrogate.predict(d);
            expected_improvement(m, v.sqrt(), best)
        };
        let candidates: Vec<(f64, f64)> = match domain {
            DesignDomain::Grid { .. } => domain.members().into_iter().map(|d| (d, ei(d))).collect(),
            DesignDomain::Interval { .. } => (0..cfg.ei_seeds.max(1))
                .map(|_| {
                    let s = rng.random_range(lo..=hi);
                    local_max(&ei, s, lo, hi)
                })
                .collect(),
        };
        let pick = candidates
            .iter()
            .copied()
            .filter(|(d, _)| !is_dup(&tried, *d))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)));
        let d = match pick {
            Some((d, _)) => d,
            None => match domain {
                DesignDomain::Grid { .. } => {
                    debug!("every grid design evaluated; stopping early");
                    break;
                }
                DesignDomain::Interval { .. } => loop {
                    let d = rng.random_range(lo..=hi);
                    if !is_dup(&tried, d) {
                        break d;
                    }
                },
            },
        };
        let (m, v) = surrogate.predict(d);
        let e = ei(d);
        tried.push(d);
        run(d, Some((m, v, e)), &mut xs, &mut ys, &mut trace);
    }

    if xs.is_empty() {
        return Err(BoError::NoEvaluations);
    }
    let raw_best = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (x, y))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    if xs.len() < 2 {
        return Ok(BoResult { design: raw_best.0, raw_best, trace, grid: Vec::new(), hyper: None });
    }
    let final_gp = GpSurrogate::fit(&xs, &ys, lo, hi, cfg.restarts, rng);
    let design = mean_argmax(&final_gp, domain, cfg.grid_points);
    let grid_designs = match domain {
        DesignDomain::Grid { .. } => domain.members(),
        DesignDomain::Interval { .. } => domain.linspace(cfg.grid_points.max(2)),
    };
    let grid = grid_designs
        .into_iter()
        .map(|d| {
            let (mean, var) = final_gp.predict(d);
            GridPoint { design: d, mean, var }
        })
        .collect();
    Ok(BoResult { design, raw_best, trace, grid, hyper: Some(final_gp.hyper) })
}
