use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l != 0).count();
    (pos, labels.len() - pos)
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::numeric("NaN score"));
    }
    let (p, n) = class_counts(labels);
    if p == 0 || n == 0 {
        return Err(Error::data("undefined AUC: only one class present"));
    }
    Ok((p, n))
}

/// Area under the ROC curve as the Mann–Whitney statistic: the probability
/// that a positive outranks a negative, ties counting one half. Computed from
/// midranks in O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie block i..=j shares their mean
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] != 0 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn f1_from_counts(tp: f64, fp: f64, fn_: f64) -> Confusion {
    let sensitivity = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    Confusion {
        sensitivity,
        precision,
        f1: ratio(2.0 * sensitivity * precision, sensitivity + precision),
    }
}

/// Sensitivity, precision and F1 with `score ≥ threshold` predicted
/// positive. Empty denominators give 0.
pub fn sens_prec(scores: &[f64], labels: &[u8], threshold: f64) -> Confusion {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l != 0) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    f1_from_counts(tp, fp, fn_)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub f1: f64,
}

/// F1-maximizing operating threshold. Each distinct score is a candidate
/// cut; the returned threshold sits midway into the gap below the cut so it
/// separates the same points. Ties in F1 go to the higher threshold.
pub fn choose_threshold(scores: &[f64], labels: &[u8]) -> Result<ThresholdChoice> {
    let (n_pos, _) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut best: Option<(f64, usize)> = None;
    let mut i = 0;
    while i < order.len() {
        let cut = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == cut {
            if labels[order[j]] != 0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let f1 = f1_from_counts(tp, fp, n_pos as f64 - tp).f1;
        // strict improvement only: earlier cuts are higher thresholds
        if best.is_none_or(|(b, _)| f1 > b) {
            best = Some((f1, i));
        }
        i = j;
    }
    let (f1, at) = best.expect("non-empty");
    let cut = scores[order[at]];
    let below = order[at..].iter().map(|&k| scores[k]).find(|&s| s < cut);
    let threshold = match below {
        Some(b) => {
            let mid = b + (cut - b) / 2.0;
            if mid > b && mid <= cut {
                mid
            } else {
                cut
            }
        }
        None => cut,
    };
    Ok(ThresholdChoice { threshold, f1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from (+∞, 0, 0) down to the lowest score, one point per
/// distinct score.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let cut = scores[order[i]];
        while i < order.len() && scores[order[i]] == cut {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(RocPoint {
            threshold: cut,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(out)
}

/// Linear interpolation of TPR at a given FPR.
pub fn tpr_at(curve: &[RocPoint], fpr: f64) -> f64 {
    for w in curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        if fpr >= a.fpr && fpr <= b.fpr {
            if b.fpr == a.fpr {
                return b.tpr;
            }
            return a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr);
        }
    }
    curve.last().map_or(0.0, |p| p.tpr)
}
