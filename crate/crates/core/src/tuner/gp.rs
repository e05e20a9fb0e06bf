//! Gaussian-process surrogate with a squared-exponential kernel.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const NOISE: f64 = 1e-4;
pub const JITTER: f64 = 1e-8;

/// Length scales scanned by maximum marginal likelihood.
pub fn length_scale_grid() -> Vec<f64> {
    (0..20).map(|i| 0.05 * 1.25f64.powi(i)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn se_kernel(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    (-0.5 * sq_dist(a, b) / (length_scale * length_scale)).exp()
}

/// Lower-triangular `L` with `L Lᵀ = A` (row-major, n×n).
pub fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::numeric("kernel matrix is not positive definite"));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

fn backward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// A GP conditioned on standardized objectives.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    pub x: Vec<Vec<f64>>,
    pub length_scale: f64,
    y_mean: f64,
    y_sd: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

impl GaussianProcess {
    pub fn fit_with(x: &[Vec<f64>], y: &[f64], length_scale: f64) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(Error::data("GP needs matching, non-empty inputs"));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        let z: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = se_kernel(&x[i], &x[j], length_scale);
            }
            k[i * n + i] += NOISE + JITTER;
        }
        let chol = cholesky(&k, n)?;
        let alpha = backward_sub(&chol, n, &forward_sub(&chol, n, &z));
        let fit: f64 = z.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum();
        let lml = -0.5 * fit - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(GaussianProcess {
            x: x.to_vec(),
            length_scale,
            y_mean,
            y_sd,
            chol,
            alpha,
            log_marginal_likelihood: lml,
        })
    }

    /// Picks the length scale on [`length_scale_grid`] with the highest
    /// log marginal likelihood (first wins on ties).
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let mut best: Option<GaussianProcess> = None;
        for ls in length_scale_grid() {
            let gp = match Self::fit_with(x, y, ls) {
                Ok(gp) => gp,
                Err(_) => continue,
            };
            if best
                .as_ref()
                .is_none_or(|b| gp.log_marginal_likelihood > b.log_marginal_likelihood)
            {
                best = Some(gp);
            }
        }
        best.ok_or_else(|| Error::numeric("GP fit failed for every length scale"))
    }

    /// Posterior mean and standard deviation in objective units.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let ks: Vec<f64> = self.x.iter().map(|xi| se_kernel(xi, p, self.length_scale)).collect();
        let mean: f64 = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward_sub(&self.chol, n, &ks);
        let var = (1.0 - v.iter().map(|a| a * a).sum::<f64>()).max(0.0);
        (self.y_mean + self.y_sd * mean, self.y_sd * var.sqrt())
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let gain = mean - best;
    if sd <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    (gain * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}
