use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::cv::{FoldData, FoldModel};
use super::metrics::sens_prec;
use crate::cohort::Cohort;
use crate::ehr_model::PatientSequence;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub feature: String,
    /// Mean of baseline F1 minus permuted F1 over folds × repeats.
    pub mean_delta_f1: f64,
    pub sd: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided one-sample t-test against zero: `(t, p)`.
pub fn t_test_zero(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n < 2 {
        return (0.0, 1.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) };
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    (t, p)
}

/// Replaces column `col` of `target` with the donor's column, aligned at the
/// most recent day. Rows the donor cannot cover become NaN, which the
/// scaler imputes with the training mean.
pub fn transplant_column(target: &PatientSequence, donor: &PatientSequence, col: usize) -> PatientSequence {
    let mut out = target.clone();
    let t_rows = target.n_rows();
    let d_rows = donor.n_rows();
    for back in 0..t_rows {
        let v = if back < d_rows {
            donor.matrix.get(d_rows - 1 - back, col)
        } else {
            f64::NAN
        };
        out.matrix.set(t_rows - 1 - back, col, v);
    }
    out
}

fn f1_at(model: &FoldModel, idx: &[usize], seqs: &[&PatientSequence], h: usize, n_h: usize) -> Result<f64> {
    let data: &FoldData = &model.data;
    let mut scores = Vec::with_capacity(idx.len());
    let mut labels = Vec::with_capacity(idx.len());
    for (&i, s) in idx.iter().zip(seqs) {
        scores.push(model.model.score(data, i, s, n_h)?[h]);
        labels.push(data.labels[i][h]);
    }
    Ok(sens_prec(&scores, &labels, model.thresholds[h]).f1)
}

/// Permutation importance at horizon `h`: for each feature and fold, whole
/// column trajectories are shuffled across the fold's evaluated test
/// patients `repeats` times, and the drop in F1 at the frozen threshold is
/// recorded. `features` restricts the columns; `None` means all.
pub fn permutation_importance(
    models: &[FoldModel],
    cohort: &Cohort,
    h: usize,
    features: Option<&[String]>,
    repeats: usize,
    seed: u64,
) -> Result<Vec<ImportanceRecord>> {
    let first = models.first().ok_or_else(|| Error::data("no fitted folds"))?;
    let n_h = cohort.horizons.len();
    let names: Vec<String> = match features {
        Some(f) => f.to_vec(),
        None => first.data.feature_names().to_vec(),
    };
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for m in models {
        if !m.thresholds[h].is_finite() {
            continue;
        }
        let data = &m.data;
        let idx: Vec<usize> = data
            .test
            .iter()
            .copied()
            .filter(|&i| cohort.patients[i].label_mask[h] == 1)
            .collect();
        let base_seqs: Vec<&PatientSequence> = idx.iter().map(|&i| &data.raw[i]).collect();
        let base = f1_at(m, &idx, &base_seqs, h, n_h)?;
        for (f, name) in names.iter().enumerate() {
            let col = data
                .featurizer
                .column(name)
                .ok_or_else(|| Error::data(format!("feature '{name}' not in fold {} vocabulary", data.fold)))?;
            for r in 0..repeats {
                let key = (data.fold as u64) << 40 | (f as u64) << 16 | r as u64;
                let mut rng = rng_from(derive_seed(seed, tag::PERMUTE, key));
                let mut perm: Vec<usize> = (0..idx.len()).collect();
                perm.shuffle(&mut rng);
                let permuted: Vec<PatientSequence> = (0..idx.len())
                    .map(|a| transplant_column(base_seqs[a], base_seqs[perm[a]], col))
                    .collect();
                let refs: Vec<&PatientSequence> = permuted.iter().collect();
                deltas[f].push(base - f1_at(m, &idx, &refs, h, n_h)?);
            }
        }
    }
    Ok(names
        .into_iter()
        .zip(deltas)
        .map(|(feature, d)| {
            let n = d.len();
            let mean = if n > 0 { d.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let sd = if n > 1 {
                (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let (t_statistic, p_value) = t_test_zero(&d);
            ImportanceRecord {
                feature,
                mean_delta_f1: mean,
                sd,
                t_statistic,
                p_value,
                n,
            }
        })
        .collect())
}

pub fn importance_csv(records: &[ImportanceRecord]) -> String {
    let mut s = String::from("feature,mean_delta_f1,sd,t_statistic,p_value,n\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.feature, r.mean_delta_f1, r.sd, r.t_statistic, r.p_value, r.n
        ));
    }
    s
}
