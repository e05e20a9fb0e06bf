//! Seeded synthetic EHR cohorts with a planted discrete-time hazard.
//!
//! Each patient has latent age, blood-pressure level and two comorbidities.
//! A daily event probability `sigmoid(intercept + η)` drives the first
//! cardiovascular event, where `η` is linear in the standardized latents.
//! The noise lab is drawn independently of everything and has no
//! coefficient. Per-patient randomness comes from
//! `derive_seed(seed, PATIENT, index)`, so patient `i` is identical across
//! cohort sizes.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, HorizonSet};
use crate::ehr_model::{Disease, EventDefinition, Modality, PatientRecord, RawEvent, Sex};
use crate::error::{Error, Result};
use crate::evaluator::roc_auc;
use crate::featurizer::PhysiologicalRanges;
use crate::num::sigmoid;
use crate::par::Exec;
use crate::rng::{self, ChaCha8Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub modality: Modality,
    pub code: String,
    pub mean: f64,
    /// SD of the patient-level baseline.
    pub between_sd: f64,
    /// SD of a single reading around the baseline.
    pub within_sd: f64,
    /// Probability of a reading on a visit.
    pub obs_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRate {
    pub modality: Modality,
    pub code: String,
    pub per_visit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComorbiditySpec {
    pub name: String,
    pub prevalence: f64,
    /// Codes emitted on visits of affected patients.
    pub codes: Vec<CodeRate>,
    /// Probability that the diagnosis is also coded on the first visit.
    pub onset_coded: f64,
}

/// Planted log-odds coefficients on the standardized latents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    pub daily_intercept: f64,
    pub age: f64,
    pub blood_pressure: f64,
    pub comorbidity_a: f64,
    pub comorbidity_b: f64,
}

/// Missing JSON fields take their [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub schema_version: u32,
    pub n_patients: usize,
    pub disease: Disease,
    pub study_days: i64,
    pub max_entry_day: i64,
    pub min_care_days: i64,
    pub mean_visit_gap: f64,
    pub age_mean: f64,
    pub age_sd: f64,
    pub blood_pressure: ChannelSpec,
    pub noise_channel: ChannelSpec,
    pub other_channels: Vec<ChannelSpec>,
    pub background_codes: Vec<CodeRate>,
    pub comorbidity_a: ComorbiditySpec,
    pub comorbidity_b: ComorbiditySpec,
    pub hazard: HazardSpec,
    pub abnormal_fraction: f64,
    pub seed: u64,
}

fn ch(modality: Modality, code: &str, mean: f64, between: f64, within: f64, p: f64) -> ChannelSpec {
    ChannelSpec {
        modality,
        code: code.into(),
        mean,
        between_sd: between,
        within_sd: within,
        obs_prob: p,
    }
}

fn rate(modality: Modality, code: &str, p: f64) -> CodeRate {
    CodeRate {
        modality,
        code: code.into(),
        per_visit: p,
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        use Modality::*;
        GeneratorConfig {
            schema_version: 1,
            n_patients: 3000,
            disease: Disease::Mi,
            study_days: 1825,
            max_entry_day: 400,
            min_care_days: 300,
            mean_visit_gap: 12.0,
            age_mean: 63.0,
            age_sd: 11.0,
            blood_pressure: ch(Vital, "SBP", 135.0, 12.0, 24.0, 0.5),
            noise_channel: ch(Lab, "NOISE_MARKER", 50.0, 6.0, 8.0, 0.4),
            other_channels: vec![
                ch(Vital, "HEART_RATE", 76.0, 7.0, 9.0, 0.5),
                ch(Vital, "TEMPERATURE", 36.8, 0.15, 0.35, 0.3),
                ch(Lab, "ALBUMIN", 40.0, 3.0, 2.5, 0.25),
                ch(Lab, "CREATININE", 85.0, 15.0, 10.0, 0.25),
                ch(Demographic, "BMI", 27.5, 4.0, 0.8, 0.08),
            ],
            background_codes: vec![
                rate(Encounter, "OUTPATIENT", 0.7),
                rate(Encounter, "INPATIENT", 0.2),
                rate(Encounter, "EMERGENCY", 0.1),
                rate(Diagnosis, "I10", 0.12),
                rate(Diagnosis, "E78.5", 0.08),
                rate(Diagnosis, "J18.9", 0.04),
                rate(Diagnosis, "N39.0", 0.04),
                rate(Diagnosis, "R07.4", 0.05),
                rate(Diagnosis, "J90", 0.02),
                rate(Diagnosis, "K21.9", 0.04),
                rate(Diagnosis, "M54.5", 0.04),
                rate(Diagnosis, "R55", 0.03),
                rate(Diagnosis, "J44.9", 0.03),
                rate(Diagnosis, "Z87.8", 0.02),
                rate(Procedure, "U19.2", 0.03),
                rate(Procedure, "X35.2", 0.06),
                rate(Procedure, "U05.1", 0.02),
                rate(Procedure, "Y53.4", 0.03),
                rate(Medication, "0212000", 0.15),
                rate(Medication, "0205051", 0.10),
                rate(Medication, "0407010", 0.12),
                rate(Medication, "0103050", 0.08),
                rate(Medication, "0501013", 0.04),
            ],
            comorbidity_a: ComorbiditySpec {
                name: "diabetes".into(),
                prevalence: 0.25,
                codes: vec![rate(Diagnosis, "E11.9", 0.08), rate(Medication, "0601022", 0.15)],
                onset_coded: 0.3,
            },
            comorbidity_b: ComorbiditySpec {
                name: "atrial_fibrillation".into(),
                prevalence: 0.2,
                codes: vec![rate(Diagnosis, "I48.9", 0.005)],
                onset_coded: 0.9,
            },
            hazard: HazardSpec {
                daily_intercept: -9.5,
                age: 0.9,
                blood_pressure: 1.4,
                comorbidity_a: 1.2,
                comorbidity_b: 2.0,
            },
            abnormal_fraction: 0.05,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.n_patients == 0 {
            return bad("n_patients must be positive");
        }
        if self.study_days <= self.max_entry_day + self.min_care_days || self.min_care_days <= 14 {
            return bad("study_days must exceed max_entry_day + min_care_days (> 14)");
        }
        if !(self.mean_visit_gap > 0.0) || !(self.age_sd > 0.0) {
            return bad("visit gap and age sd must be positive");
        }
        let h = &self.hazard;
        if ![h.daily_intercept, h.age, h.blood_pressure, h.comorbidity_a, h.comorbidity_b]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("hazard coefficients must be finite");
        }
        if !(0.0..1.0).contains(&self.abnormal_fraction) {
            return bad("abnormal_fraction must be in [0, 1)");
        }
        let channels = std::iter::once(&self.blood_pressure)
            .chain(std::iter::once(&self.noise_channel))
            .chain(&self.other_channels);
        for c in channels {
            if !c.modality.is_continuous() || !(0.0..=1.0).contains(&c.obs_prob) {
                return bad(&format!("channel {} must be continuous with obs_prob in [0,1]", c.code));
            }
        }
        if self.noise_channel.code == self.blood_pressure.code
            || self.other_channels.iter().any(|c| c.code == self.noise_channel.code)
        {
            return bad("the noise channel must be declared exactly once");
        }
        for c in [&self.comorbidity_a, &self.comorbidity_b] {
            if !(0.0..=1.0).contains(&c.prevalence) {
                return bad("comorbidity prevalence must be in [0,1]");
            }
        }
        let def = EventDefinition::default_for(self.disease);
        if self
            .background_codes
            .iter()
            .chain(&self.comorbidity_a.codes)
            .chain(&self.comorbidity_b.codes)
            .any(|c| c.modality == Modality::Diagnosis && def.matches_code(&c.code))
        {
            return bad("background codes must not contain the event definition");
        }
        Ok(())
    }

    pub fn event_code(&self) -> &'static str {
        match self.disease {
            Disease::Mi => "I21.9",
            Disease::Stroke => "I63.9",
        }
    }
}

/// Latent state and oracle risks of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub linear_predictor: f64,
    pub daily_hazard: f64,
    pub event_day: Option<i64>,
    pub comorbidity_a: bool,
    pub comorbidity_b: bool,
    pub bp_level: f64,
}

impl PatientTruth {
    /// Probability of an event within `days` days under the planted hazard.
    pub fn risk_within(&self, days: i64) -> f64 {
        1.0 - (1.0 - self.daily_hazard).powf(days as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub schema_version: u32,
    pub seed: u64,
    pub study_days: i64,
    pub noise_feature: String,
    pub patients: Vec<PatientTruth>,
}

impl GroundTruth {
    /// Oracle risk per horizon; the unbounded horizon uses the study length.
    pub fn risks(&self, patient: &PatientTruth, horizons: &HorizonSet) -> Vec<f64> {
        (0..horizons.len())
            .map(|h| patient.risk_within(horizons.limit(h).unwrap_or(self.study_days)))
            .collect()
    }

    pub fn by_id(&self) -> std::collections::HashMap<&str, &PatientTruth> {
        self.patients.iter().map(|p| (p.patient_id.as_str(), p)).collect()
    }
}

fn reading(
    rng: &mut ChaCha8Rng,
    spec: &ChannelSpec,
    level: f64,
    range: Option<crate::featurizer::Range>,
    abnormal_fraction: f64,
) -> f64 {
    let v = level + spec.within_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
    match range {
        Some(r) => {
            let span = r.high - r.low;
            if rng.gen::<f64>() < abnormal_fraction {
                let off = span * rng.gen_range(0.05..0.3);
                if rng.gen_bool(0.5) {
                    r.high + off
                } else {
                    r.low - off
                }
            } else {
                v.clamp(r.low, r.high)
            }
        }
        None => v,
    }
}

fn emit(out: &mut Vec<RawEvent>, id: &str, day: i64, c: &CodeRate) {
    out.push(RawEvent::coded(id, day, c.modality, &c.code));
}

fn generate_one(cfg: &GeneratorConfig, ranges: &PhysiologicalRanges, index: usize) -> (PatientRecord, PatientTruth) {
    let mut rng = rng::sub_rng(cfg.seed, rng::tag::PATIENT, index as u64);
    let id = format!("P{index:06}");
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let sex = if rng.gen_bool(0.5) { Sex::Male } else { Sex::Female };
    let age_z = std_normal.sample(&mut rng);
    let entry = rng.gen_range(0..=cfg.max_entry_day);
    let age_at_entry = (cfg.age_mean + cfg.age_sd * age_z).clamp(30.0, 95.0);
    let birth_day = entry - (age_at_entry * crate::ehr_model::DAYS_PER_YEAR).round() as i64;
    let bp_z = std_normal.sample(&mut rng);
    let has_a = rng.gen_bool(cfg.comorbidity_a.prevalence);
    let has_b = rng.gen_bool(cfg.comorbidity_b.prevalence);
    let noise_level = cfg.noise_channel.mean + cfg.noise_channel.between_sd * std_normal.sample(&mut rng);
    let other_levels: Vec<f64> = cfg
        .other_channels
        .iter()
        .map(|c| c.mean + c.between_sd * std_normal.sample(&mut rng))
        .collect();
    let h = &cfg.hazard;
    let eta = h.age * (age_at_entry - cfg.age_mean) / cfg.age_sd
        + h.blood_pressure * bp_z
        + h.comorbidity_a * f64::from(u8::from(has_a))
        + h.comorbidity_b * f64::from(u8::from(has_b));
    let p = sigmoid(h.daily_intercept + eta);
    // failures before the first success of a Bernoulli(p) day process
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let wait = (u.ln() / (1.0 - p).ln()).floor();
    let first_possible = entry + crate::cohort::MIN_LEAD_DAYS + 1;
    let event_day = if wait < (cfg.study_days - first_possible) as f64 {
        Some(first_possible + wait as i64)
    } else {
        None
    };
    let care_end = entry + rng.gen_range(cfg.min_care_days..=cfg.study_days - entry);
    let last_visit = match event_day {
        Some(e) => care_end.min(e - 1),
        None => care_end,
    };
    let gap_scale = cfg.mean_visit_gap * (0.5 * std_normal.sample(&mut rng)).exp();
    let gaps = Exp::new(1.0 / gap_scale).expect("positive rate");

    let bp_level = cfg.blood_pressure.mean + cfg.blood_pressure.between_sd * bp_z;
    let mut events = Vec::new();
    let mut day = entry;
    let mut first = true;
    while day <= last_visit {
        let channels = std::iter::once((&cfg.blood_pressure, bp_level))
            .chain(std::iter::once((&cfg.noise_channel, noise_level)))
            .chain(cfg.other_channels.iter().zip(other_levels.iter().copied()));
        let mut any = false;
        for (spec, level) in channels {
            if rng.gen::<f64>() < spec.obs_prob {
                let v = reading(&mut rng, spec, level, ranges.get(&spec.code), cfg.abnormal_fraction);
                events.push(RawEvent::measured(&id, day, spec.modality, &spec.code, v));
                any = true;
            }
        }
        // exactly one encounter type per visit, the rest independent
        let enc: Vec<&CodeRate> = cfg
            .background_codes
            .iter()
            .filter(|c| c.modality == Modality::Encounter)
            .collect();
        if !enc.is_empty() {
            let total: f64 = enc.iter().map(|c| c.per_visit).sum();
            let mut pick = rng.gen::<f64>() * total;
            for c in &enc {
                pick -= c.per_visit;
                if pick <= 0.0 {
                    emit(&mut events, &id, day, c);
                    any = true;
                    break;
                }
            }
        }
        for c in cfg.background_codes.iter().filter(|c| c.modality != Modality::Encounter) {
            if rng.gen::<f64>() < c.per_visit {
                emit(&mut events, &id, day, c);
                any = true;
            }
        }
        for (has, spec) in [(has_a, &cfg.comorbidity_a), (has_b, &cfg.comorbidity_b)] {
            if !has {
                continue;
            }
            for c in &spec.codes {
                let p = if first && c.modality == Modality::Diagnosis {
                    spec.onset_coded.max(c.per_visit)
                } else {
                    c.per_visit
                };
                if rng.gen::<f64>() < p {
                    emit(&mut events, &id, day, c);
                    any = true;
                }
            }
        }
        if !any {
            let c = cfg.background_codes.first().cloned().unwrap_or(CodeRate {
                modality: Modality::Encounter,
                code: "OUTPATIENT".into(),
                per_visit: 1.0,
            });
            emit(&mut events, &id, day, &c);
        }
        first = false;
        day += 1 + gaps.sample(&mut rng).floor() as i64;
    }
    if let Some(e) = event_day {
        events.push(RawEvent::coded(&id, e, Modality::Diagnosis, cfg.event_code()));
        events.push(RawEvent::coded(&id, e, Modality::Encounter, "EMERGENCY"));
    }
    let record = PatientRecord {
        patient_id: id.clone(),
        sex,
        birth_day,
        events,
    };
    let truth = PatientTruth {
        patient_id: id,
        linear_predictor: eta,
        daily_hazard: p,
        event_day,
        comorbidity_a: has_a,
        comorbidity_b: has_b,
        bp_level,
    };
    (record, truth)
}

/// Generates `cfg.n_patients` records and their ground truth.
pub fn generate(cfg: &GeneratorConfig, exec: Exec) -> Result<(Vec<PatientRecord>, GroundTruth)> {
    cfg.validate()?;
    let ranges = PhysiologicalRanges::default();
    let pairs = exec.map_range(cfg.n_patients, |i| generate_one(cfg, &ranges, i));
    let (records, patients): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((
        records,
        GroundTruth {
            schema_version: 1,
            seed: cfg.seed,
            study_days: cfg.study_days,
            noise_feature: format!(
                "{}:{}",
                cfg.noise_channel.modality.as_str(),
                crate::ehr_model::normalize_code(&cfg.noise_channel.code)
            ),
            patients,
        },
    ))
}

/// Oracle scores for the cohort at horizon `h`, aligned with
/// `cohort.patients`.
pub fn oracle_scores(truth: &GroundTruth, cohort: &Cohort, h: usize) -> Result<Vec<f64>> {
    let by_id = truth.by_id();
    cohort
        .patients
        .iter()
        .map(|p| {
            let t = by_id
                .get(p.patient_id.as_str())
                .ok_or_else(|| Error::data(format!("no ground truth for {}", p.patient_id)))?;
            Ok(truth.risks(t, &cohort.horizons)[h])
        })
        .collect()
}

/// AUC of the planted risk against the realized cohort labels at horizon
/// `h` (masked labels excluded): the ceiling for any learned model.
pub fn bayes_auc(truth: &GroundTruth, cohort: &Cohort, h: usize) -> Result<f64> {
    let scores = oracle_scores(truth, cohort, h)?;
    let (s, y): (Vec<f64>, Vec<u8>) = cohort
        .patients
        .iter()
        .zip(scores)
        .filter(|(p, _)| p.label_mask[h] == 1)
        .map(|(p, s)| (s, p.labels[h]))
        .unzip();
    roc_auc(&s, &y)
}
