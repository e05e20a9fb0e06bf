use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ehr_model::PatientSequence;
use crate::error::{Error, Result};
use crate::num::{dot, sigmoid, Tensor2};
use crate::rng::rng_from;

/// L1-penalized logistic regression over a concatenated history window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub history_window: usize,
    pub iterations: usize,
    pub residual: f64,
}

impl SparseLinearModel {
    pub fn n_nonzero(&self) -> usize {
        self.weights.iter().filter(|w| **w != 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegOptions {
    pub lambda: f64,
    pub history_window: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegOptions {
    fn default() -> Self {
        LogRegOptions {
            lambda: 1e-2,
            history_window: 50,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// The `k` most recent real rows, oldest first, front-padded with zero rows.
pub fn concat_history(seq: &PatientSequence, k: usize) -> Vec<f64> {
    let nf = seq.n_features();
    let mut out = vec![0.0; k * nf];
    let real: Vec<usize> = (0..seq.n_rows()).filter(|&r| seq.mask[r] == 1).collect();
    let take = real.len().min(k);
    let src = &real[real.len() - take..];
    for (slot, &r) in (k - take..k).zip(src) {
        out[slot * nf..(slot + 1) * nf].copy_from_slice(seq.matrix.row(r));
    }
    out
}

pub fn soft_threshold(w: f64, t: f64) -> f64 {
    if w > t {
        w - t
    } else if w < -t {
        w + t
    } else {
        0.0
    }
}

/// Row-compressed copy of the design matrix; history windows are mostly
/// zero padding.
struct Csr {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl Csr {
    fn from_dense(x: &Tensor2) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..x.rows() {
            for (j, &v) in x.row(r).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j as u32);
                    values.push(v);
                }
            }
            indptr.push(values.len());
        }
        Csr {
            n_cols: x.cols(),
            indptr,
            indices,
            values,
        }
    }

    fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    fn row_dot(&self, r: usize, w: &[f64]) -> f64 {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b]
            .iter()
            .zip(&self.values[a..b])
            .map(|(&j, &v)| v * w[j as usize])
            .sum()
    }

    fn row_axpy(&self, r: usize, s: f64, out: &mut [f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        for (&j, &v) in self.indices[a..b].iter().zip(&self.values[a..b]) {
            out[j as usize] += s * v;
        }
    }
}

/// Mean BCE and its gradient (weights, intercept) at `(w, b)`.
fn smooth_part(x: &Csr, y: &[f64], w: &[f64], b: f64, grad: &mut [f64]) -> (f64, f64) {
    let n = x.n_rows() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut gb = 0.0;
    for r in 0..x.n_rows() {
        let z = x.row_dot(r, w) + b;
        // log(1 + e^z) − y z, stable for large |z|
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y[r] * z;
        let d = sigmoid(z) - y[r];
        gb += d;
        x.row_axpy(r, d, grad);
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, gb / n)
}

/// Mean logistic loss of `(w, b)` on dense rows, with its gradient with
/// respect to `w` and `b`. The L1 term is not included.
pub fn logistic_loss_grad(x: &Tensor2, y: &[u8], w: &[f64], b: f64) -> Result<(f64, Vec<f64>, f64)> {
    if x.rows() != y.len() || x.cols() != w.len() {
        return Err(Error::data("design matrix, labels and weights disagree in size"));
    }
    let csr = Csr::from_dense(x);
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let mut grad = vec![0.0; w.len()];
    let (loss, gb) = smooth_part(&csr, &yf, w, b, &mut grad);
    Ok((loss, grad, gb))
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1] / 4n`, by power iteration.
fn lipschitz(x: &Csr, seed: u64) -> f64 {
    let d = x.n_cols + 1;
    let n = x.n_rows() as f64;
    let mut rng = rng_from(seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() + 0.5).collect();
    let mut lam = 0.0;
    for _ in 0..200 {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        v.iter_mut().for_each(|e| *e /= norm);
        let mut out = vec![0.0; d];
        for r in 0..x.n_rows() {
            let xv = x.row_dot(r, &v[..d - 1]) + v[d - 1];
            x.row_axpy(r, xv, &mut out[..d - 1]);
            out[d - 1] += xv;
        }
        out.iter_mut().for_each(|e| *e /= 4.0 * n);
        let next = dot(&out, &v);
        v = out;
        if (next - lam).abs() <= 1e-10 * next.abs() {
            lam = next;
            break;
        }
        lam = next;
    }
    // power iteration approaches from below
    lam.max(1e-12) * 1.01
}

/// Worst violation of the L1 optimality conditions at `(w, b)` given the
/// smooth gradient.
pub fn stationarity_residual(grad: &[f64], grad_b: f64, w: &[f64], lambda: f64) -> f64 {
    let mut worst = grad_b.abs();
    for (&g, &wj) in grad.iter().zip(w) {
        let r = if wj == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g + lambda * wj.signum()).abs()
        };
        worst = worst.max(r);
    }
    worst
}

/// Minimizes mean BCE + λ‖w‖₁ with accelerated proximal gradient (fixed step
/// 1/L, gradient-based momentum restart). The intercept is not penalized.
/// The stationarity residual is evaluated every few iterations.
pub fn logreg_train(x: &Tensor2, y: &[u8], opts: &LogRegOptions, seed: u64) -> Result<SparseLinearModel> {
    if x.rows() != y.len() {
        return Err(Error::data("design matrix and labels differ in length"));
    }
    if x.rows() == 0 {
        return Err(Error::data("empty training set"));
    }
    if !x.is_finite() {
        return Err(Error::data("non-finite entry in design matrix"));
    }
    if !(opts.lambda >= 0.0) || !opts.lambda.is_finite() {
        return Err(Error::config("λ must be finite and ≥ 0"));
    }
    const CHECK_EVERY: usize = 10;
    let csr = Csr::from_dense(x);
    let y: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let d = x.cols();
    let step = 1.0 / lipschitz(&csr, seed);

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut vw = w.clone();
    let mut vb = b;
    let mut t: f64 = 1.0;
    let mut grad = vec![0.0; d];
    let (_, gb) = smooth_part(&csr, &y, &w, b, &mut grad);
    let mut residual = stationarity_residual(&grad, gb, &w, opts.lambda);
    let mut iterations = 0;
    let mut new_w = vec![0.0; d];
    while residual >= opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let (_, vgb) = smooth_part(&csr, &y, &vw, vb, &mut grad);
        for j in 0..d {
            new_w[j] = soft_threshold(vw[j] - step * grad[j], step * opts.lambda);
        }
        let new_b = vb - step * vgb;
        // restart momentum when the step points against the last move
        let mut align = (vb - new_b) * (new_b - b);
        for j in 0..d {
            align += (vw[j] - new_w[j]) * (new_w[j] - w[j]);
        }
        if align > 0.0 {
            t = 1.0;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        for j in 0..d {
            vw[j] = new_w[j] + mom * (new_w[j] - w[j]);
        }
        vb = new_b + mom * (new_b - b);
        t = t_next;
        std::mem::swap(&mut w, &mut new_w);
        b = new_b;
        if iterations % CHECK_EVERY == 0 || iterations == opts.max_iter {
            let (_, gb) = smooth_part(&csr, &y, &w, b, &mut grad);
            residual = stationarity_residual(&grad, gb, &w, opts.lambda);
        }
    }
    if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
        return Err(Error::numeric("logistic regression diverged"));
    }
    Ok(SparseLinearModel {
        weights: w,
        intercept: b,
        lambda: opts.lambda,
        history_window: opts.history_window,
        iterations,
        residual,
    })
}

pub fn logreg_predict(model: &SparseLinearModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::data(format!(
            "feature vector length {} does not match model length {}",
            x.len(),
            model.weights.len()
        )));
    }
    Ok(sigmoid(dot(&model.weights, x) + model.intercept))
}
