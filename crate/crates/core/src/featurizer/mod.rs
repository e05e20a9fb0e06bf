//! Per-day feature aggregation, vocabulary selection, scaling and imputation.
//!
//! Column layout of a day vector, in order:
//!
//! * demographics: `demographic:AGE`, `demographic:SEX`
//! * each continuous variable as `<modality>:<code>:{median,mad,count,abnormal}`
//! * counted categoricals (medications, encounters) as `<modality>:<code>`
//! * sparse diagnosis/procedure indicators as `<modality>:<code>`
//! * cumulative Charlson flags as `charlson:<condition>`

mod config;
mod scaler;
mod vocab;

pub use config::{CharlsonCondition, CharlsonMap, PhysiologicalRanges, Range};
pub use scaler::ScalerImputer;
pub use vocab::{build_vocabulary, SlotKey, Vocabulary, VocabularyOptions};

use std::collections::HashMap;

use crate::ehr_model::{normalize_code, Modality, PatientRecord, PatientSequence};
use crate::error::{Error, Result};
use crate::num::Tensor2;

pub const N_DEMOGRAPHIC: usize = 2;
pub const CONTINUOUS_WIDTH: usize = 4;

/// Median, MAD, count and abnormality flag of one day's readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuousSummary {
    pub median: f64,
    pub mad: f64,
    pub count: f64,
    pub abnormal: f64,
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Aggregates one variable's readings for a day. `None` means there were no
/// readings; callers emit missing markers in that case. Without a range the
/// abnormality flag is always 0.
pub fn aggregate_continuous(values: &[f64], range: Option<Range>) -> Option<ContinuousSummary> {
    if values.is_empty() {
        return None;
    }
    let mut buf = values.to_vec();
    let median = median_of(&mut buf);
    for v in buf.iter_mut() {
        *v = (*v - median).abs();
    }
    let mad = median_of(&mut buf);
    let abnormal = match range {
        Some(r) if values.iter().any(|&v| !r.contains(v)) => 1.0,
        _ => 0.0,
    };
    Some(ContinuousSummary {
        median,
        mad,
        count: values.len() as f64,
        abnormal,
    })
}

/// Vocabulary plus configs, with lookup tables for encoding.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub vocab: Vocabulary,
    pub ranges: PhysiologicalRanges,
    pub charlson: CharlsonMap,
    continuous: HashMap<SlotKey, usize>,
    counted: HashMap<SlotKey, usize>,
    coded: HashMap<SlotKey, usize>,
    /// charlson condition index -> column, for retained conditions
    charlson_cols: Vec<Option<usize>>,
    slot_ranges: Vec<Option<Range>>,
}

impl Featurizer {
    pub fn new(vocab: Vocabulary, ranges: PhysiologicalRanges, charlson: CharlsonMap) -> Self {
        let cont_base = N_DEMOGRAPHIC;
        let count_base = cont_base + CONTINUOUS_WIDTH * vocab.continuous_slots.len();
        let code_base = count_base + vocab.count_slots.len();
        let charlson_base = code_base + vocab.code_slots.len();
        let continuous = vocab
            .continuous_slots
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), cont_base + CONTINUOUS_WIDTH * i))
            .collect();
        let counted = vocab
            .count_slots
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), count_base + i))
            .collect();
        let coded = vocab
            .code_slots
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), code_base + i))
            .collect();
        let charlson_cols = charlson
            .conditions
            .iter()
            .map(|c| {
                vocab
                    .charlson_slots
                    .iter()
                    .position(|n| *n == c.name)
                    .map(|p| charlson_base + p)
            })
            .collect();
        let slot_ranges = vocab
            .continuous_slots
            .iter()
            .map(|k| ranges.get(&k.code))
            .collect();
        Featurizer {
            vocab,
            ranges,
            charlson,
            continuous,
            counted,
            coded,
            charlson_cols,
            slot_ranges,
        }
    }

    pub fn n_features(&self) -> usize {
        self.vocab.feature_names.len()
    }

    /// Encodes every observation day up to and including `up_to_day` into an
    /// unscaled sequence (NaN marks missing continuous summaries). Only the
    /// most recent `max_days` rows are kept, but Charlson flags still see the
    /// whole history.
    pub fn encode_sequence(
        &self,
        record: &PatientRecord,
        up_to_day: Option<i64>,
        max_days: Option<usize>,
    ) -> PatientSequence {
        let limit = up_to_day.unwrap_or(i64::MAX);
        let events: Vec<_> = record
            .clinical_events()
            .filter(|e| e.day <= limit)
            .collect();
        let mut days: Vec<i64> = events.iter().map(|e| e.day).collect();
        days.dedup();
        let keep_from = max_days.map_or(0, |m| days.len().saturating_sub(m));
        let kept_days = days[keep_from..].to_vec();
        let n_feat = self.n_features();
        let mut matrix = Tensor2::zeros(kept_days.len(), n_feat);
        let mut flags = vec![false; self.charlson.conditions.len()];
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.vocab.continuous_slots.len()];
        let mut cursor = 0;
        for (d, &day) in days.iter().enumerate() {
            let start = cursor;
            while cursor < events.len() && events[cursor].day == day {
                cursor += 1;
            }
            let todays = &events[start..cursor];
            for e in todays {
                if e.modality == Modality::Diagnosis {
                    for c in self.charlson.conditions_for(&e.code) {
                        flags[c] = true;
                    }
                }
            }
            if d < keep_from {
                continue;
            }
            let row = matrix.row_mut(d - keep_from);
            self.fill_row(record, day, todays.iter().copied(), &flags, &mut values, row);
        }
        PatientSequence {
            patient_id: record.patient_id.clone(),
            mask: vec![1; kept_days.len()],
            days: kept_days,
            matrix,
        }
    }

    fn fill_row<'a>(
        &self,
        record: &PatientRecord,
        day: i64,
        todays: impl Iterator<Item = &'a crate::ehr_model::RawEvent>,
        flags: &[bool],
        values: &mut [Vec<f64>],
        row: &mut [f64],
    ) {
        values.iter_mut().for_each(|v| v.clear());
        row[0] = record.age_at(day);
        row[1] = record.sex.as_f64();
        for e in todays {
            let key = SlotKey::new(e.modality, &e.code);
            match e.modality {
                m if m.is_continuous() => {
                    if let (Some(&col), Some(v)) = (self.continuous.get(&key), e.value) {
                        values[(col - N_DEMOGRAPHIC) / CONTINUOUS_WIDTH].push(v);
                    }
                }
                Modality::Medication | Modality::Encounter => {
                    if let Some(&col) = self.counted.get(&key) {
                        row[col] += 1.0;
                    }
                }
                _ => {
                    if let Some(&col) = self.coded.get(&key) {
                        row[col] = 1.0;
                    }
                }
            }
        }
        for (slot, vals) in values.iter().enumerate() {
            let col = N_DEMOGRAPHIC + CONTINUOUS_WIDTH * slot;
            match aggregate_continuous(vals, self.slot_ranges[slot]) {
                Some(s) => {
                    row[col] = s.median;
                    row[col + 1] = s.mad;
                    row[col + 2] = s.count;
                    row[col + 3] = s.abnormal;
                }
                None => {
                    row[col] = f64::NAN;
                    row[col + 1] = f64::NAN;
                    row[col + 2] = 0.0;
                    row[col + 3] = 0.0;
                }
            }
        }
        for (c, &on) in flags.iter().enumerate() {
            if let Some(col) = self.charlson_cols[c] {
                row[col] = if on { 1.0 } else { 0.0 };
            }
        }
    }

    /// Feature vector of a single observation day.
    pub fn encode_day(&self, record: &PatientRecord, day: i64) -> Result<Vec<f64>> {
        let seq = self.encode_sequence(record, Some(day), Some(1));
        match seq.days.last() {
            Some(&d) if d == day => Ok(seq.matrix.row(0).to_vec()),
            _ => Err(Error::data(format!(
                "patient {}: day {day} is not an observation day",
                record.patient_id
            ))),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.vocab.feature_names.iter().position(|n| n == name)
    }
}

/// Convenience for feature names of continuous summaries.
pub fn continuous_feature_name(modality: Modality, code: &str, part: &str) -> String {
    format!("{}:{}:{part}", modality.as_str(), normalize_code(code))
}
