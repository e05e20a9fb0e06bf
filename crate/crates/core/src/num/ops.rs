use crate::error::{Error, Result};

/// Probability clipping used by every BCE computation.
pub const PROB_EPS: f64 = 1e-7;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn clip_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over the entries with `mask != 0`; masked entries get exactly 0.
/// Returns `None` when nothing is unmasked.
pub fn masked_softmax(scores: &[f64], mask: &[u8]) -> Option<Vec<f64>> {
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m != 0)
        .map(|(s, _)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let exps: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(s, &m)| if m != 0 { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    Some(exps.into_iter().map(|e| e / total).collect())
}

fn check_lengths(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b || a != c {
        return Err(Error::data(format!(
            "length mismatch: predictions {a}, labels {b}, mask {c}"
        )));
    }
    Ok(())
}

/// Masked mean binary cross-entropy on probabilities.
///
/// Returns the loss and its gradient with respect to the (clipped)
/// predictions. The normalizer is `max(1, Σ mask)`.
pub fn bce_loss(predictions: &[f64], labels: &[f64], mask: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(predictions.len(), labels.len(), mask.len())?;
    let norm = mask.iter().sum::<f64>().max(1.0);
    let mut loss = 0.0;
    let mut grad = vec![0.0; predictions.len()];
    for i in 0..predictions.len() {
        if mask[i] == 0.0 {
            continue;
        }
        let p = clip_prob(predictions[i]);
        let y = labels[i];
        loss -= mask[i] * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        grad[i] = -mask[i] * (y / p - (1.0 - y) / (1.0 - p)) / norm;
    }
    Ok((loss / norm, grad))
}

/// Same loss as [`bce_loss`] evaluated on `sigmoid(logits)`, with the
/// gradient taken with respect to the logits.
pub fn bce_with_logits(logits: &[f64], labels: &[f64], mask: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(logits.len(), labels.len(), mask.len())?;
    let norm = mask.iter().sum::<f64>().max(1.0);
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for i in 0..logits.len() {
        if mask[i] == 0.0 {
            continue;
        }
        let raw = sigmoid(logits[i]);
        let p = clip_prob(raw);
        let y = labels[i];
        loss -= mask[i] * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        grad[i] = mask[i] * (raw - y) / norm;
    }
    Ok((loss / norm, grad))
}
