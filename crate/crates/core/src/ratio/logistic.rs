//! L2-penalised logistic regression by damped Newton.
//!
//! Objective (mean loss, intercept unpenalised):
//!
//! f(β) = (1/n) Σ [softplus(xᵢᵀβ) − yᵢ xᵢᵀβ] + (λ/2) Σ_{j≥1} βⱼ²

use nalgebra::{DMatrix, DVector};

/// Row-major design matrix whose first column is the constant 1.
pub(crate) struct Design<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub p: usize,
}

impl Design<'_> {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Stalled {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean unpenalised logistic loss.
pub(crate) fn mean_loss(d: &Design<'_>, beta: &[f64]) -> f64 {
    let n = d.n();
    (0..n)
        .map(|i| {
            let z = d.eta(i, beta);
            softplus(z) - d.y[i] * z
        })
        .sum::<f64>()
        / n as f64
}

pub(crate) fn objective(d: &Design<'_>, beta: &[f64], lambda: f64) -> f64 {
    let penalty: f64 = beta[1..].iter().map(|b| b * b).sum();
    mean_loss(d, beta) + 0.5 * lambda * penalty
}

fn gradient_hessian(d: &Design<'_>, beta: &[f64], lambda: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p) = (d.n(), d.p);
    let mut g = DVector::zeros(p);
    let mut h = DMatrix::zeros(p, p);
    for i in 0..n {
        let row = d.row(i);
        let mu = sigmoid(d.eta(i, beta));
        let r = mu - d.y[i];
        let w = mu * (1.0 - mu);
        for a in 0..p {
            g[a] += r * row[a];
            let wa = w * row[a];
            for b in 0..=a {
                h[(a, b)] += wa * row[b];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    g *= inv_n;
    for a in 0..p {
        for b in 0..=a {
            let v = h[(a, b)] * inv_n;
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    for j in 1..p {
        g[j] += lambda * beta[j];
        h[(j, j)] += lambda;
    }
    (g, h)
}

pub(crate) fn fit(d: &Design<'_>, lambda: f64, max_iter: usize, tol: f64) -> Result<Solution, Stalled> {
    let p = d.p;
    let mut beta = vec![0.0; p];
    let mut f = objective(d, &beta, lambda);
    let mut grad_norm = f64::INFINITY;
    for iter in 0..max_iter {
        let (g, mut h) = gradient_hessian(d, &beta, lambda);
        grad_norm = g.norm();
        if grad_norm <= tol {
            return Ok(Solution { beta, iterations: iter, grad_norm });
        }
        // tiny ridge keeps the factorisation alive when the weights vanish
        let step = loop {
            if let Some(chol) = h.clone().cholesky() {
                break chol.solve(&g);
            }
            for j in 0..p {
                h[(j, j)] += 1e-10 + 1e-8 * h[(j, j)].abs();
            }
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut trial = beta.clone();
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..p {
                trial[j] = beta[j] - t * step[j];
            }
            let ft = objective(d, &trial, lambda);
            if ft <= f - 1e-4 * t * slope {
                f = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // at the floating-point floor of the objective; accept if the
            // gradient is already tiny relative to the data scale
            if grad_norm <= tol.sqrt() * 1e-2 {
                return Ok(Solution { beta, iterations: iter, grad_norm });
            }
            return Err(Stalled { beta, iterations: iter, grad_norm });
        }
        std::mem::swap(&mut beta, &mut trial);
    }
    let (g, _) = gradient_hessian(d, &beta, lambda);
    grad_norm = grad_norm.min(g.norm());
    if grad_norm <= tol {
        Ok(Solution { beta, iterations: max_iter, grad_norm })
    } else {
        Err(Stalled { beta, iterations: max_iter, grad_norm })
    }
}
