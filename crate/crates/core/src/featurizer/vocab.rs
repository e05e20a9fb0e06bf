use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::config::CharlsonMap;
use crate::ehr_model::{normalize_code, Modality, PatientRecord};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotKey {
    pub modality: Modality,
    pub code: String,
}

impl SlotKey {
    pub fn new(modality: Modality, code: &str) -> Self {
        SlotKey {
            modality,
            code: normalize_code(code),
        }
    }

    pub fn name(&self) -> String {
        format!("{}:{}", self.modality.as_str(), self.code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabularyOptions {
    pub top_k: usize,
    pub min_prevalence: f64,
}

impl Default for VocabularyOptions {
    fn default() -> Self {
        VocabularyOptions {
            top_k: 300,
            min_prevalence: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub continuous_slots: Vec<SlotKey>,
    /// Medications and encounters, counted per day.
    pub count_slots: Vec<SlotKey>,
    /// Diagnoses and procedures, 0/1 per day.
    pub code_slots: Vec<SlotKey>,
    pub charlson_slots: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Vocabulary {
    pub fn from_slots(
        continuous_slots: Vec<SlotKey>,
        count_slots: Vec<SlotKey>,
        code_slots: Vec<SlotKey>,
        charlson_slots: Vec<String>,
    ) -> Self {
        let mut names = vec!["demographic:AGE".to_string(), "demographic:SEX".to_string()];
        for k in &continuous_slots {
            for part in ["median", "mad", "count", "abnormal"] {
                names.push(format!("{}:{part}", k.name()));
            }
        }
        names.extend(count_slots.iter().map(SlotKey::name));
        names.extend(code_slots.iter().map(SlotKey::name));
        names.extend(charlson_slots.iter().map(|c| format!("charlson:{c}")));
        Vocabulary {
            continuous_slots,
            count_slots,
            code_slots,
            charlson_slots,
            feature_names: names,
        }
    }
}

/// Selects the feature slots from a corpus.
///
/// Prevalence is the fraction of patients with at least one occurrence. The
/// `top_k` cap applies to diagnosis+procedure codes together (ties broken by
/// code); every family is then filtered at `prevalence ≥ min_prevalence`.
pub fn build_vocabulary(
    records: &[PatientRecord],
    opts: &VocabularyOptions,
    charlson: &CharlsonMap,
) -> Vocabulary {
    let n = records.len().max(1) as f64;
    let mut patients: BTreeMap<SlotKey, usize> = BTreeMap::new();
    let mut charlson_patients = vec![0usize; charlson.conditions.len()];
    for r in records {
        let mut seen: BTreeSet<SlotKey> = BTreeSet::new();
        let mut flags = vec![false; charlson.conditions.len()];
        for e in r.clinical_events() {
            seen.insert(SlotKey::new(e.modality, &e.code));
            if e.modality == Modality::Diagnosis {
                for c in charlson.conditions_for(&e.code) {
                    flags[c] = true;
                }
            }
        }
        for k in seen {
            *patients.entry(k).or_default() += 1;
        }
        for (c, f) in flags.iter().enumerate() {
            if *f {
                charlson_patients[c] += 1;
            }
        }
    }
    // count/n ≥ min_prevalence, compared on counts so 1/100 at 0.01 is kept
    let keep = |count: usize| count as f64 >= opts.min_prevalence * n - 1e-9;

    let mut continuous = Vec::new();
    let mut counted = Vec::new();
    let mut coded: Vec<(SlotKey, usize)> = Vec::new();
    for (k, &c) in &patients {
        match k.modality {
            m if m.is_continuous() => {
                if keep(c) {
                    continuous.push(k.clone());
                }
            }
            Modality::Medication | Modality::Encounter => {
                if keep(c) {
                    counted.push(k.clone());
                }
            }
            _ => coded.push((k.clone(), c)),
        }
    }
    coded.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.code.cmp(&b.0.code)).then_with(|| a.0.cmp(&b.0)));
    coded.truncate(opts.top_k);
    let mut code_slots: Vec<SlotKey> = coded
        .into_iter()
        .filter(|(_, c)| keep(*c))
        .map(|(k, _)| k)
        .collect();
    code_slots.sort();
    let charlson_slots = charlson
        .conditions
        .iter()
        .zip(&charlson_patients)
        .filter(|(_, &c)| c > 0 && keep(c))
        .map(|(cond, _)| cond.name.clone())
        .collect();
    Vocabulary::from_slots(continuous, counted, code_slots, charlson_slots)
}
