use serde::{Deserialize, Serialize};

use crate::ehr_model::PatientSequence;
use crate::error::{Error, Result};
use crate::num::Tensor2;

/// Per-feature min/max scaling with population-mean imputation, fitted on
/// training sequences only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerImputer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mean: Vec<f64>,
}

impl ScalerImputer {
    /// Fits on the real rows of unscaled sequences. NaN entries are missing.
    /// A feature never observed gets min 0, max 1, mean 0.
    pub fn fit(train: &[PatientSequence]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::data("cannot fit scaler on an empty training set"))?;
        let f = first.n_features();
        let mut min = vec![f64::INFINITY; f];
        let mut max = vec![f64::NEG_INFINITY; f];
        let mut sum = vec![0.0; f];
        let mut count = vec![0usize; f];
        for s in train {
            if s.n_features() != f {
                return Err(Error::data("sequences disagree on feature count"));
            }
            for r in s.first_real_row()..s.n_rows() {
                for (j, &v) in s.matrix.row(r).iter().enumerate() {
                    if v.is_nan() {
                        continue;
                    }
                    min[j] = min[j].min(v);
                    max[j] = max[j].max(v);
                    sum[j] += v;
                    count[j] += 1;
                }
            }
        }
        let mut mean = vec![0.0; f];
        for j in 0..f {
            if count[j] == 0 {
                min[j] = 0.0;
                max[j] = 1.0;
            } else {
                // keep min ≤ mean ≤ max under rounding
                mean[j] = (sum[j] / count[j] as f64).clamp(min[j], max[j]);
            }
        }
        Ok(ScalerImputer { min, max, mean })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// Imputes, scales and clips one value of feature `j`.
    #[inline]
    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        let v = if v.is_nan() { self.mean[j] } else { v };
        let span = self.max[j] - self.min[j];
        if span <= 0.0 {
            return 0.0;
        }
        ((v - self.min[j]) / span).clamp(0.0, 1.0)
    }

    pub fn scale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(j, &v)| self.scale_value(j, v)).collect()
    }

    /// Scales a sequence and pads/truncates it to `n_days_pad` rows, keeping
    /// the most recent days and front-padding with zero rows.
    pub fn transform(&self, seq: &PatientSequence, n_days_pad: usize) -> Result<PatientSequence> {
        if seq.n_features() != self.n_features() {
            return Err(Error::data(format!(
                "sequence has {} features, scaler expects {}",
                seq.n_features(),
                self.n_features()
            )));
        }
        let real_rows: Vec<usize> = (seq.first_real_row()..seq.n_rows()).collect();
        let keep = real_rows.len().min(n_days_pad);
        let src = &real_rows[real_rows.len() - keep..];
        let pad = n_days_pad - keep;
        let mut matrix = Tensor2::zeros(n_days_pad, self.n_features());
        for (i, &r) in src.iter().enumerate() {
            let out = matrix.row_mut(pad + i);
            for (j, &v) in seq.matrix.row(r).iter().enumerate() {
                out[j] = self.scale_value(j, v);
            }
        }
        let mut mask = vec![0u8; n_days_pad];
        mask[pad..].iter_mut().for_each(|m| *m = 1);
        Ok(PatientSequence {
            patient_id: seq.patient_id.clone(),
            days: seq.days[seq.days.len() - keep..].to_vec(),
            matrix,
            mask,
        })
    }
}
