//! Raw and featurized record types shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::num::Tensor2;

/// Reserved demographic codes carrying the per-patient constants in the
/// event stream.
pub const SEX_CODE: &str = "SEX";
pub const BIRTH_DAY_CODE: &str = "BIRTH_DAY";

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Diagnosis,
    Procedure,
    Medication,
    Lab,
    Vital,
    Demographic,
    Encounter,
}

impl Modality {
    /// Labs, vitals and demographic measurements carry a value.
    pub fn is_continuous(self) -> bool {
        matches!(self, Modality::Lab | Modality::Vital | Modality::Demographic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Diagnosis => "diagnosis",
            Modality::Procedure => "procedure",
            Modality::Medication => "medication",
            Modality::Lab => "lab",
            Modality::Vital => "vital",
            Modality::Demographic => "demographic",
            Modality::Encounter => "encounter",
        }
    }
}

/// One timestamped observation. Field order is the wire order of the JSONL
/// event format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub patient_id: String,
    pub day: i64,
    pub modality: Modality,
    pub code: String,
    pub value: Option<f64>,
}

impl RawEvent {
    pub fn coded(patient_id: &str, day: i64, modality: Modality, code: &str) -> Self {
        RawEvent {
            patient_id: patient_id.to_string(),
            day,
            modality,
            code: code.to_string(),
            value: None,
        }
    }

    pub fn measured(patient_id: &str, day: i64, modality: Modality, code: &str, value: f64) -> Self {
        RawEvent {
            patient_id: patient_id.to_string(),
            day,
            modality,
            code: code.to_string(),
            value: Some(value),
        }
    }

    /// True for the reserved SEX / BIRTH_DAY carrier events.
    pub fn is_patient_constant(&self) -> bool {
        self.modality == Modality::Demographic
            && (self.code == SEX_CODE || self.code == BIRTH_DAY_CODE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

impl Sex {
    pub fn as_f64(self) -> f64 {
        match self {
            Sex::Female => 0.0,
            Sex::Male => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub sex: Sex,
    pub birth_day: i64,
    pub events: Vec<RawEvent>,
}

impl PatientRecord {
    /// Sorted distinct observation days. Carrier events do not make a day an
    /// observation day.
    pub fn observation_days(&self) -> Vec<i64> {
        let mut days: Vec<i64> = self
            .events
            .iter()
            .filter(|e| !e.is_patient_constant())
            .map(|e| e.day)
            .collect();
        days.dedup();
        days
    }

    pub fn age_at(&self, day: i64) -> f64 {
        (day - self.birth_day) as f64 / DAYS_PER_YEAR
    }

    /// Events in the carrier-free clinical stream.
    pub fn clinical_events(&self) -> impl Iterator<Item = &RawEvent> {
        self.events.iter().filter(|e| !e.is_patient_constant())
    }

    /// Rebuilds the flat event stream including the SEX/BIRTH_DAY carriers,
    /// placed on the first observation day (day 0 when there is none).
    pub fn to_events(&self) -> Vec<RawEvent> {
        let first = self.clinical_events().map(|e| e.day).min().unwrap_or(0);
        let mut out = Vec::with_capacity(self.events.len() + 2);
        out.push(RawEvent::measured(
            &self.patient_id,
            first,
            Modality::Demographic,
            SEX_CODE,
            self.sex.as_f64(),
        ));
        out.push(RawEvent::measured(
            &self.patient_id,
            first,
            Modality::Demographic,
            BIRTH_DAY_CODE,
            self.birth_day as f64,
        ));
        out.extend(self.clinical_events().cloned());
        out
    }
}

/// Groups a flat event stream into records. Every patient needs SEX and
/// BIRTH_DAY carrier events; events are stably sorted by day.
pub fn assemble_records(events: Vec<RawEvent>) -> Result<Vec<PatientRecord>> {
    let mut by_patient: BTreeMap<String, Vec<RawEvent>> = BTreeMap::new();
    for e in events {
        by_patient.entry(e.patient_id.clone()).or_default().push(e);
    }
    let mut records = Vec::with_capacity(by_patient.len());
    for (patient_id, mut evs) in by_patient {
        let mut sex = None;
        let mut birth = None;
        for e in evs.iter().filter(|e| e.is_patient_constant()) {
            let v = e.value.ok_or_else(|| {
                Error::data(format!("patient {patient_id}: {} without value", e.code))
            })?;
            if e.code == SEX_CODE {
                sex = Some(if v >= 0.5 { Sex::Male } else { Sex::Female });
            } else {
                birth = Some(v.round() as i64);
            }
        }
        let sex = sex.ok_or_else(|| Error::data(format!("patient {patient_id}: no SEX event")))?;
        let birth_day = birth
            .ok_or_else(|| Error::data(format!("patient {patient_id}: no BIRTH_DAY event")))?;
        evs.retain(|e| !e.is_patient_constant());
        evs.sort_by_key(|e| e.day);
        records.push(PatientRecord {
            patient_id,
            sex,
            birth_day,
            events: evs,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub event_index: Option<usize>,
    pub rule: String,
}

impl Violation {
    fn at(i: usize, rule: &str) -> Self {
        Violation {
            event_index: Some(i),
            rule: rule.to_string(),
        }
    }
}

pub const RULE_DAY: &str = "day ≥ 0";
pub const RULE_MISSING_VALUE: &str = "continuous modality missing value";
pub const RULE_NON_FINITE: &str = "non-finite value";
pub const RULE_EMPTY_CODE: &str = "empty code";
pub const RULE_UNSORTED: &str = "events not sorted by day";
pub const RULE_PATIENT: &str = "event patient_id differs from record";

/// Checks every record invariant. Violations are data, so an empty list
/// means the record is well formed.
pub fn validate_record(record: &PatientRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut prev_day = i64::MIN;
    for (i, e) in record.events.iter().enumerate() {
        if e.patient_id != record.patient_id {
            out.push(Violation::at(i, RULE_PATIENT));
        }
        if e.day < 0 {
            out.push(Violation::at(i, RULE_DAY));
        }
        if e.day < prev_day {
            out.push(Violation::at(i, RULE_UNSORTED));
        }
        prev_day = prev_day.max(e.day);
        if e.code.trim().is_empty() {
            out.push(Violation::at(i, RULE_EMPTY_CODE));
        }
        match e.value {
            None if e.modality.is_continuous() => out.push(Violation::at(i, RULE_MISSING_VALUE)),
            Some(v) if !v.is_finite() => out.push(Violation::at(i, RULE_NON_FINITE)),
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disease {
    Stroke,
    Mi,
}

impl std::str::FromStr for Disease {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stroke" => Ok(Disease::Stroke),
            "mi" => Ok(Disease::Mi),
            other => Err(Error::Usage(format!("unknown disease '{other}' (stroke|mi)"))),
        }
    }
}

/// Uppercases and trims a code. Dots are kept.
pub fn normalize_code(code: &str) -> String {
    code.trim().to_ascii_uppercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDefinition {
    pub disease: Disease,
    pub code_prefixes: Vec<String>,
}

impl EventDefinition {
    pub fn new(disease: Disease, code_prefixes: Vec<String>) -> Result<Self> {
        if code_prefixes.is_empty() || code_prefixes.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::config("event definition needs non-empty code prefixes"));
        }
        Ok(EventDefinition {
            disease,
            code_prefixes: code_prefixes.iter().map(|p| normalize_code(p)).collect(),
        })
    }

    pub fn default_for(disease: Disease) -> Self {
        let prefixes = match disease {
            Disease::Stroke => vec!["I63".to_string(), "I69.3".to_string()],
            Disease::Mi => vec!["I21".to_string(), "I25.2".to_string()],
        };
        EventDefinition {
            disease,
            code_prefixes: prefixes,
        }
    }

    pub fn matches(&self, event: &RawEvent) -> bool {
        event.modality == Modality::Diagnosis && self.matches_code(&event.code)
    }

    pub fn matches_code(&self, code: &str) -> bool {
        let code = normalize_code(code);
        self.code_prefixes.iter().any(|p| code.starts_with(p.as_str()))
    }

    /// First day carrying an event-defining diagnosis.
    pub fn first_event_day(&self, record: &PatientRecord) -> Option<i64> {
        record.events.iter().filter(|e| self.matches(e)).map(|e| e.day).min()
    }
}

/// Day-by-feature matrix for one patient.
///
/// After padding, the real days occupy the last `days.len()` rows and the
/// mask is `[0; pad] ++ [1; days.len()]`. Unscaled sequences may hold NaN as
/// the missing marker.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientSequence {
    pub patient_id: String,
    pub days: Vec<i64>,
    pub matrix: Tensor2,
    pub mask: Vec<u8>,
}

impl PatientSequence {
    pub fn n_rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_features(&self) -> usize {
        self.matrix.cols()
    }

    /// Row index of the first real day.
    pub fn first_real_row(&self) -> usize {
        self.n_rows() - self.days.len()
    }

    pub fn n_real(&self) -> usize {
        self.days.len()
    }
}
