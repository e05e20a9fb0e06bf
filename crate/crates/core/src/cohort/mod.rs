//! Case/control cohort construction: inclusion, horizon labels, nearest
//! neighbour matching and pair-preserving folds.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ehr_model::{EventDefinition, PatientRecord, Sex};
use crate::error::{Error, Result};
use crate::rng;

/// Minimum gap between the index day and a case's event.
pub const MIN_LEAD_DAYS: i64 = 14;

/// Prediction horizons: the finite limits in days, followed implicitly by an
/// unbounded horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorizonSet {
    pub finite_days: Vec<i64>,
}

impl Default for HorizonSet {
    fn default() -> Self {
        HorizonSet {
            finite_days: vec![30, 91, 365],
        }
    }
}

impl HorizonSet {
    pub fn new(finite_days: Vec<i64>) -> Result<Self> {
        if finite_days.is_empty()
            || finite_days[0] <= 0
            || finite_days.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::config("horizons must be positive and strictly increasing"));
        }
        Ok(HorizonSet { finite_days })
    }

    /// Number of horizons including the unbounded one.
    pub fn len(&self) -> usize {
        self.finite_days.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Limit in days; `None` for the unbounded horizon.
    pub fn limit(&self, i: usize) -> Option<i64> {
        self.finite_days.get(i).copied()
    }

    /// Follow-up needed to certify a control event-free at horizon `i`. The
    /// unbounded horizon needs the longest finite horizon.
    pub fn required_follow_up(&self, i: usize) -> i64 {
        self.limit(i)
            .unwrap_or_else(|| *self.finite_days.last().expect("non-empty"))
    }

    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .finite_days
            .iter()
            .map(|&d| format!("{}m", (d as f64 / 30.4375).round() as i64))
            .collect();
        let last = (*self.finite_days.last().expect("non-empty") as f64 / 30.4375).round() as i64;
        out.push(format!(">{last}m"));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Event within the horizon of the index day.
    #[default]
    Cumulative,
    /// Event in the bucket between the previous horizon and this one.
    Disjoint,
}

/// A patient that passed inclusion, before labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub patient_id: String,
    pub index_day: i64,
    pub event_day: Option<i64>,
    pub age_at_index: f64,
    pub sex: Sex,
    pub n_obs_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub patient_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Inclusion {
    pub cases: Vec<Candidate>,
    pub control_pool: Vec<Candidate>,
    pub exclusions: Vec<Exclusion>,
}

pub const REASON_NO_LEAD: &str = "no observation ≥2 weeks prior";
pub const REASON_NO_OBS: &str = "no observations";

/// Splits records into eligible cases and the control pool.
pub fn apply_inclusion(records: &[PatientRecord], event_def: &EventDefinition) -> Inclusion {
    let mut out = Inclusion::default();
    for r in records {
        let days = r.observation_days();
        let exclude = |reason: &str| Exclusion {
            patient_id: r.patient_id.clone(),
            reason: reason.to_string(),
        };
        match event_def.first_event_day(r) {
            Some(event) => {
                let cutoff = event - MIN_LEAD_DAYS;
                let eligible = days.iter().filter(|&&d| d <= cutoff).count();
                if eligible == 0 {
                    out.exclusions.push(exclude(REASON_NO_LEAD));
                    continue;
                }
                let index_day = days[eligible - 1];
                out.cases.push(Candidate {
                    patient_id: r.patient_id.clone(),
                    index_day,
                    event_day: Some(event),
                    age_at_index: r.age_at(index_day),
                    sex: r.sex,
                    n_obs_days: eligible,
                });
            }
            None => {
                let Some(&index_day) = days.last() else {
                    out.exclusions.push(exclude(REASON_NO_OBS));
                    continue;
                };
                out.control_pool.push(Candidate {
                    patient_id: r.patient_id.clone(),
                    index_day,
                    event_day: None,
                    age_at_index: r.age_at(index_day),
                    sex: r.sex,
                    n_obs_days: days.len(),
                });
            }
        }
    }
    out
}

/// Labels and label mask for one included patient. `data_end_day` is the
/// last day covered by the data set; it bounds a control's follow-up.
pub fn label_horizons(
    candidate: &Candidate,
    horizons: &HorizonSet,
    data_end_day: i64,
    mode: LabelMode,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let n = horizons.len();
    match candidate.event_day {
        Some(event) => {
            let delta = event - candidate.index_day;
            if delta < MIN_LEAD_DAYS {
                return Err(Error::data(format!(
                    "case {} has only {delta} days between index and event",
                    candidate.patient_id
                )));
            }
            let within = |i: usize| horizons.limit(i).is_none_or(|h| delta <= h);
            let labels = (0..n)
                .map(|i| {
                    let hit = match mode {
                        LabelMode::Cumulative => within(i),
                        LabelMode::Disjoint => within(i) && (i == 0 || !within(i - 1)),
                    };
                    u8::from(hit)
                })
                .collect();
            Ok((labels, vec![1; n]))
        }
        None => {
            let follow_up = data_end_day - candidate.index_day;
            let mask = (0..n)
                .map(|i| u8::from(follow_up >= horizons.required_follow_up(i)))
                .collect();
            Ok((vec![0; n], mask))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPatient {
    pub patient_id: String,
    pub index_day: i64,
    pub labels: Vec<u8>,
    pub label_mask: Vec<u8>,
    pub is_case: bool,
    pub age_at_index: f64,
    pub sex: Sex,
    pub n_obs_days: usize,
    pub event_day: Option<i64>,
    /// Index of the matched pair this patient belongs to.
    pub pair: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub case_id: String,
    pub control_id: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub event_def: EventDefinition,
    pub horizons: HorizonSet,
    pub label_mode: LabelMode,
    pub data_end_day: i64,
    pub patients: Vec<LabeledPatient>,
    pub matching_report: Vec<MatchedPair>,
}

impl Cohort {
    pub fn n_pairs(&self) -> usize {
        self.matching_report.len()
    }

    /// The patients at `indices`, with pair ids renumbered. Every selected
    /// patient's partner must be selected too.
    pub fn subset(&self, indices: &[usize]) -> Result<Cohort> {
        let mut remap = std::collections::BTreeMap::new();
        let mut count = vec![0usize; self.n_pairs()];
        for &i in indices {
            let p = self
                .patients
                .get(i)
                .ok_or_else(|| Error::data(format!("patient index {i} out of range")))?;
            count[p.pair] += 1;
        }
        if count.contains(&1) {
            return Err(Error::data("subset splits a matched pair"));
        }
        for (pair, _) in count.iter().enumerate().filter(|(_, &c)| c > 0) {
            let next = remap.len();
            remap.insert(pair, next);
        }
        let patients = indices
            .iter()
            .map(|&i| {
                let mut p = self.patients[i].clone();
                p.pair = remap[&p.pair];
                p
            })
            .collect();
        Ok(Cohort {
            event_def: self.event_def.clone(),
            horizons: self.horizons.clone(),
            label_mode: self.label_mode,
            data_end_day: self.data_end_day,
            patients,
            matching_report: remap.keys().map(|&k| self.matching_report[k].clone()).collect(),
        })
    }

    /// Positive labels per horizon (unmasked only).
    pub fn positive_counts(&self) -> Vec<usize> {
        (0..self.horizons.len())
            .map(|h| {
                self.patients
                    .iter()
                    .filter(|p| p.label_mask[h] == 1 && p.labels[h] == 1)
                    .count()
            })
            .collect()
    }
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Matching distances are Euclidean over (age, observation-day count), each
/// z-scored on the union of cases and pool.
#[derive(Debug, Clone, Copy)]
pub struct MatchScale {
    age: (f64, f64),
    days: (f64, f64),
}

impl MatchScale {
    pub fn fit(cases: &[Candidate], pool: &[Candidate]) -> Self {
        let all = || cases.iter().chain(pool.iter());
        MatchScale {
            age: mean_sd(all().map(|c| c.age_at_index)),
            days: mean_sd(all().map(|c| c.n_obs_days as f64)),
        }
    }

    pub fn distance(&self, a: &Candidate, b: &Candidate) -> f64 {
        let da = (a.age_at_index - b.age_at_index) / self.age.1;
        let dd = (a.n_obs_days as f64 - b.n_obs_days as f64) / self.days.1;
        (da * da + dd * dd).sqrt()
    }
}

/// Greedy 1:1 nearest-neighbour matching without replacement, exact on sex.
/// Cases are processed oldest first; returns `(case, control, distance)`
/// index triples into the inputs.
pub fn match_controls(cases: &[Candidate], pool: &[Candidate]) -> Result<Vec<(usize, usize, f64)>> {
    for sex in [Sex::Female, Sex::Male] {
        let need = cases.iter().filter(|c| c.sex == sex).count();
        let have = pool.iter().filter(|c| c.sex == sex).count();
        if have < need {
            return Err(Error::data(format!(
                "insufficient same-sex controls: {sex:?} needs {need}, pool has {have} (deficit {})",
                need - have
            )));
        }
    }
    let scale = MatchScale::fit(cases, pool);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    order.sort_by(|&a, &b| {
        cases[b]
            .age_at_index
            .total_cmp(&cases[a].age_at_index)
            .then_with(|| cases[a].patient_id.cmp(&cases[b].patient_id))
    });
    let mut used = vec![false; pool.len()];
    let mut pairs = Vec::with_capacity(cases.len());
    for ci in order {
        let case = &cases[ci];
        let mut best: Option<(usize, f64)> = None;
        for (pi, ctrl) in pool.iter().enumerate() {
            if used[pi] || ctrl.sex != case.sex {
                continue;
            }
            let d = scale.distance(case, ctrl);
            let better = match best {
                None => true,
                Some((bi, bd)) => d < bd || (d == bd && ctrl.patient_id < pool[bi].patient_id),
            };
            if better {
                best = Some((pi, d));
            }
        }
        let (pi, d) = best.expect("sex counts checked above");
        used[pi] = true;
        pairs.push((ci, pi, d));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortOptions {
    pub label_mode: LabelMode,
    /// Last covered day; defaults to the latest event day in the data.
    pub data_end_day: Option<i64>,
}

impl Default for CohortOptions {
    fn default() -> Self {
        CohortOptions {
            label_mode: LabelMode::Cumulative,
            data_end_day: None,
        }
    }
}

/// Inclusion, matching and labeling in one pass. Patients are emitted pair
/// by pair (case then control) in matching order.
pub fn build_cohort(
    records: &[PatientRecord],
    event_def: &EventDefinition,
    horizons: &HorizonSet,
    opts: &CohortOptions,
) -> Result<(Cohort, Vec<Exclusion>)> {
    let inclusion = apply_inclusion(records, event_def);
    let data_end_day = opts.data_end_day.unwrap_or_else(|| {
        records
            .iter()
            .flat_map(|r| r.clinical_events().map(|e| e.day))
            .max()
            .unwrap_or(0)
    });
    let pairs = match_controls(&inclusion.cases, &inclusion.control_pool)?;
    let mut patients = Vec::with_capacity(2 * pairs.len());
    let mut report = Vec::with_capacity(pairs.len());
    for (k, &(ci, pi, d)) in pairs.iter().enumerate() {
        for cand in [&inclusion.cases[ci], &inclusion.control_pool[pi]] {
            let (labels, label_mask) = label_horizons(cand, horizons, data_end_day, opts.label_mode)?;
            patients.push(LabeledPatient {
                patient_id: cand.patient_id.clone(),
                index_day: cand.index_day,
                labels,
                label_mask,
                is_case: cand.event_day.is_some(),
                age_at_index: cand.age_at_index,
                sex: cand.sex,
                n_obs_days: cand.n_obs_days,
                event_day: cand.event_day,
                pair: k,
            });
        }
        report.push(MatchedPair {
            case_id: inclusion.cases[ci].patient_id.clone(),
            control_id: inclusion.control_pool[pi].patient_id.clone(),
            distance: d,
        });
    }
    Ok((
        Cohort {
            event_def: event_def.clone(),
            horizons: horizons.clone(),
            label_mode: opts.label_mode,
            data_end_day,
            patients,
            matching_report: report,
        },
        inclusion.exclusions,
    ))
}

/// Fold id per cohort patient. Matched pairs share a fold, so every fold is
/// balanced 1:1 and fold sizes differ by at most one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folds {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl Folds {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn to_csv(&self, cohort: &Cohort) -> String {
        let mut s = String::from("patient_id,fold\n");
        for (p, f) in cohort.patients.iter().zip(&self.assignment) {
            s.push_str(&format!("{},{f}\n", p.patient_id));
        }
        s
    }
}

pub fn split_folds(cohort: &Cohort, k: usize, seed: u64) -> Result<Folds> {
    split_pairs(cohort.patients.iter().map(|p| p.pair), cohort.n_pairs(), k, seed)
}

/// Assigns pair ids to `k` folds after a seeded shuffle.
pub fn split_pairs(
    pair_of: impl Iterator<Item = usize>,
    n_pairs: usize,
    k: usize,
    seed: u64,
) -> Result<Folds> {
    if k < 2 {
        return Err(Error::config("fold count must be at least 2"));
    }
    if k > n_pairs {
        return Err(Error::data(format!(
            "{k} folds requested but only {n_pairs} matched pairs"
        )));
    }
    let mut order: Vec<usize> = (0..n_pairs).collect();
    order.shuffle(&mut rng::sub_rng(seed, rng::tag::FOLD, 0));
    let mut fold_of_pair = vec![0; n_pairs];
    for (pos, &pair) in order.iter().enumerate() {
        fold_of_pair[pair] = pos % k;
    }
    Ok(Folds {
        k,
        assignment: pair_of.map(|p| fold_of_pair[p]).collect(),
    })
}

/// Masks out all but a seeded `keep_fraction` of the positive labels at
/// horizon `h` among `indices`. Used to emulate a data-poor short horizon.
pub fn subsample_positives(
    patients: &mut [LabeledPatient],
    indices: &[usize],
    h: usize,
    keep_fraction: f64,
    seed: u64,
) -> usize {
    let mut positives: Vec<usize> = indices
        .iter()
        .copied()
        .filter(|&i| patients[i].label_mask[h] == 1 && patients[i].labels[h] == 1)
        .collect();
    positives.shuffle(&mut rng::sub_rng(seed, rng::tag::SUBSAMPLE, h as u64));
    let keep = (keep_fraction * positives.len() as f64).floor() as usize;
    for &i in &positives[keep..] {
        patients[i].label_mask[h] = 0;
    }
    keep
}
