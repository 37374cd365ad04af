//! Kernel density summaries of the belief, for reporting only.

use serde::{Deserialize, Serialize};

use crate::belief::ParticleSet;
use crate::rng::Rng;

pub const GRID_POINTS: usize = 512;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// One-dimensional Gaussian KDE.
#[derive(Debug, Clone)]
pub struct Kde {
    samples: Vec<f64>,
    bandwidth: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v.sqrt())
}

/// Silverman's rule of thumb, (4 / 3n)^(1/5) times the sample sd.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let (m, sd) = mean_sd(xs);
    let h = sd * (4.0 / (3.0 * xs.len() as f64)).powf(0.2);
    h.max(1e-9 * m.abs().max(1.0))
}

impl Kde {
    pub fn new(samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty(), "KDE needs samples");
        let bandwidth = silverman_bandwidth(&samples);
        Self { samples, bandwidth }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s: f64 = self
            .samples
            .iter()
            .map(|&xi| {
                let z = (x - xi) / h;
                (-0.5 * z * z).exp()
            })
            .sum();
        s * FRAC_1_SQRT_2PI / (h * self.samples.len() as f64)
    }

    /// Evenly spaced grid covering the samples plus four bandwidths.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let lo = self.samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * self.bandwidth;
        let hi = self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * self.bandwidth;
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    /// Density on the grid, computed from sorted samples so that only
    /// kernels within eight bandwidths contribute.
    pub fn curve(&self, grid: &[f64]) -> Vec<f64> {
        let mut sorted = self.samples.clone();
        sorted.sort_by(f64::total_cmp);
        let h = self.bandwidth;
        let norm = FRAC_1_SQRT_2PI / (h * sorted.len() as f64);
        grid.iter()
            .map(|&x| {
                let a = sorted.partition_point(|&s| s < x - 8.0 * h);
                let b = sorted.partition_point(|&s| s <= x + 8.0 * h);
                sorted[a..b]
                    .iter()
                    .map(|&s| {
                        let z = (x - s) / h;
                        (-0.5 * z * z).exp()
                    })
                    .sum::<f64>()
                    * norm
            })
            .collect()
    }
}

/// Trapezoid cell masses between consecutive grid points, normalised.
fn cell_masses(grid: &[f64], dens: &[f64]) -> Vec<f64> {
    let m: Vec<f64> = grid.windows(2).zip(dens.windows(2)).map(|(g, d)| 0.5 * (d[0] + d[1]) * (g[1] - g[0])).collect();
    let total: f64 = m.iter().sum();
    m.into_iter().map(|x| x / total).collect()
}

/// Narrowest grid interval holding at least `mass` of the density.
pub fn hpdi(grid: &[f64], dens: &[f64], mass: f64) -> (f64, f64) {
    let cells = cell_masses(grid, dens);
    let mut best = (grid[0], grid[grid.len() - 1]);
    let mut acc = 0.0;
    let mut right = 0;
    for left in 0..cells.len() {
        while right < cells.len() && acc < mass {
            acc += cells[right];
            right += 1;
        }
        if acc < mass {
            break;
        }
        if grid[right] - grid[left] < best.1 - best.0 {
            best = (grid[left], grid[right]);
        }
        acc -= cells[left];
    }
    best
}

/// Highest-density region as disjoint intervals: grid cells whose density
/// exceeds the level that encloses `mass`.
pub fn hpd_regions(grid: &[f64], dens: &[f64], mass: f64) -> Vec<(f64, f64)> {
    let cells = cell_masses(grid, dens);
    let heights: Vec<f64> = dens.windows(2).map(|d| 0.5 * (d[0] + d[1])).collect();
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| heights[b].total_cmp(&heights[a]));
    let mut keep = vec![false; cells.len()];
    let mut acc = 0.0;
    for i in order {
        keep[i] = true;
        acc += cells[i];
        if acc >= mass {
            break;
        }
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < keep.len() {
        if keep[i] {
            let start = i;
            while i < keep.len() && keep[i] {
                i += 1;
            }
            out.push((grid[start], grid[i]));
        } else {
            i += 1;
        }
    }
    out
}

/// Grid locations of local maxima whose height exceeds `rel` times the peak.
pub fn modes(grid: &[f64], dens: &[f64], rel: f64) -> Vec<f64> {
    let peak = dens.iter().copied().fold(0.0, f64::max);
    let n = dens.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || dens[i] > dens[i - 1];
            let right = i + 1 == n || dens[i] >= dens[i + 1];
            left && right && dens[i] > rel * peak
        })
        .map(|i| grid[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub bandwidth: f64,
    /// Narrowest single interval holding 95% of the KDE mass.
    pub hpdi: (f64, f64),
    /// 95% highest-density region, one interval per connected piece.
    pub hpd_regions: Vec<(f64, f64)>,
    /// Local maxima above 10% of the peak density.
    pub modes: Vec<f64>,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl MarginalSummary {
    pub fn from_samples(name: &str, xs: Vec<f64>) -> Self {
        let (mean, sd) = mean_sd(&xs);
        let kde = Kde::new(xs);
        let grid = kde.grid(GRID_POINTS);
        let density = kde.curve(&grid);
        Self {
            name: name.to_string(),
            mean,
            sd,
            bandwidth: kde.bandwidth(),
            hpdi: hpdi(&grid, &density, 0.95),
            hpd_regions: hpd_regions(&grid, &density, 0.95),
            modes: modes(&grid, &density, 0.1),
            grid,
            density,
        }
    }

    pub fn width(&self) -> f64 {
        self.hpdi.1 - self.hpdi.0
    }
}

/// Product-kernel KDE of two parameters on a square grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major, `density[i * y.len() + j]` at (x[i], y[j]).
    pub density: Vec<f64>,
}

pub const JOINT_POINTS: usize = 64;

fn joint_grid(xs: &[f64], ys: &[f64]) -> JointGrid {
    // Silverman's factor in two dimensions is n^(-1/6)
    let factor = (xs.len() as f64).powf(-1.0 / 6.0);
    let hx = (mean_sd(xs).1 * factor).max(1e-9);
    let hy = (mean_sd(ys).1 * factor).max(1e-9);
    let gx = Kde { samples: xs.to_vec(), bandwidth: hx }.grid(JOINT_POINTS);
    let gy = Kde { samples: ys.to_vec(), bandwidth: hy }.grid(JOINT_POINTS);
    let mut density = vec![0.0; JOINT_POINTS * JOINT_POINTS];
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hx * hy * xs.len() as f64);
    for (&a, &b) in xs.iter().zip(ys) {
        let kx: Vec<f64> = gx.iter().map(|&g| (-0.5 * ((g - a) / hx).powi(2)).exp()).collect();
        let ky: Vec<f64> = gy.iter().map(|&g| (-0.5 * ((g - b) / hy).powi(2)).exp()).collect();
        for (i, &u) in kx.iter().enumerate() {
            if u < 1e-12 {
                continue;
            }
            for (j, &v) in ky.iter().enumerate() {
                density[i * JOINT_POINTS + j] += u * v;
            }
        }
    }
    density.iter_mut().for_each(|d| *d *= norm);
    JointGrid { x: gx, y: gy, density }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub iteration: usize,
    pub n_samples: usize,
    pub marginals: Vec<MarginalSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointGrid>,
}

pub const POSTERIOR_SAMPLES: usize = 10_000;

/// Draws belief samples and summarises each parameter with a KDE.
pub fn summarize(belief: &ParticleSet, names: &[&str], n: usize, rng: &mut Rng) -> PosteriorSummary {
    let draws = belief.sample(n, rng);
    let dim = belief.dim();
    let columns: Vec<Vec<f64>> = (0..dim).map(|j| draws.iter().map(|t| t[j]).collect()).collect();
    let marginals = columns
        .iter()
        .enumerate()
        .map(|(j, c)| MarginalSummary::from_samples(names.get(j).copied().unwrap_or("theta"), c.clone()))
        .collect();
    let joint = (dim == 2).then(|| joint_grid(&columns[0], &columns[1]));
    PosteriorSummary { iteration: belief.iteration, n_samples: n, marginals, joint }
}
