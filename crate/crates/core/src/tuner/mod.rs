//! Bayesian optimisation of model hyperparameters: a GP surrogate with
//! expected improvement, seeded quasi-random warm-up, JSONL trial history.

pub mod gp;

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{split_folds, Cohort, Folds};
use crate::ehr_model::PatientRecord;
use crate::error::{Error, Result};
use crate::evaluator::{cross_validate, CvInput, CvOptions, ModelSpec};
use crate::rng::{sub_rng, tag};
pub use gp::{expected_improvement, GaussianProcess};

pub const WARMUP_TRIALS: usize = 5;
pub const N_CANDIDATES: usize = 1024;
pub const DEFAULT_BUDGET: usize = 20;

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub scale: Scale,
    pub integer: bool,
}

impl Dimension {
    fn new(name: &str, low: f64, high: f64, scale: Scale, integer: bool) -> Self {
        Dimension {
            name: name.into(),
            low,
            high,
            scale,
            integer,
        }
    }

    pub fn decode(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let v = match self.scale {
            Scale::Linear => self.low + u * (self.high - self.low),
            Scale::Log => (self.low.ln() + u * (self.high.ln() - self.low.ln())).exp(),
        };
        let v = v.clamp(self.low, self.high);
        if self.integer {
            v.round().clamp(self.low.ceil(), self.high.floor())
        } else {
            v
        }
    }

    pub fn encode(&self, v: f64) -> f64 {
        let u = match self.scale {
            Scale::Linear => (v - self.low) / (self.high - self.low),
            Scale::Log => (v.ln() - self.low.ln()) / (self.high.ln() - self.low.ln()),
        };
        u.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn recurrent() -> Self {
        SearchSpace {
            dims: vec![
                Dimension::new("n_hidden", 4.0, 32.0, Scale::Log, true),
                Dimension::new("n_days_pad", 10.0, 100.0, Scale::Linear, true),
                Dimension::new("learning_rate", 1e-4, 1e-2, Scale::Log, false),
                Dimension::new("batch_size", 16.0, 128.0, Scale::Log, true),
            ],
        }
    }

    pub fn logreg() -> Self {
        SearchSpace {
            dims: vec![Dimension::new("lambda", 1e-4, 1e-1, Scale::Log, false)],
        }
    }

    pub fn for_spec(spec: &ModelSpec) -> Result<Self> {
        match spec {
            ModelSpec::Recurrent { .. } => Ok(Self::recurrent()),
            ModelSpec::LogReg { .. } => Ok(Self::logreg()),
            other => Err(Error::config(format!("{} has no hyperparameters to tune", other.name()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() > PRIMES.len() {
            return Err(Error::config(format!(
                "search space needs 1..={} dimensions",
                PRIMES.len()
            )));
        }
        for d in &self.dims {
            let ok = d.low.is_finite()
                && d.high.is_finite()
                && d.low < d.high
                && (d.scale == Scale::Linear || d.low > 0.0)
                && (!d.integer || d.low.ceil() <= d.high.floor());
            if !ok {
                return Err(Error::config(format!("invalid bounds for dimension {}", d.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn decode(&self, point: &[f64]) -> BTreeMap<String, f64> {
        self.dims
            .iter()
            .zip(point)
            .map(|(d, &u)| (d.name.clone(), d.decode(u)))
            .collect()
    }

    /// Moves a unit-cube point onto the grid implied by integer rounding.
    pub fn snap(&self, point: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(point).map(|(d, &u)| d.encode(d.decode(u))).collect()
    }
}

/// Writes decoded values into a copy of `base`.
pub fn apply_values(base: &ModelSpec, values: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let mut spec = base.clone();
    let unknown = |k: &str| Error::config(format!("unknown hyperparameter {k} for {}", base.name()));
    match &mut spec {
        ModelSpec::Recurrent { config } => {
            for (k, &v) in values {
                match k.as_str() {
                    "n_hidden" => config.n_hidden = v as usize,
                    "n_days_pad" => config.n_days_pad = v as usize,
                    "learning_rate" => config.learning_rate = v,
                    "batch_size" => config.batch_size = v as usize,
                    "dropout" => config.dropout = v,
                    _ => return Err(unknown(k)),
                }
            }
            config.validate()?;
        }
        ModelSpec::LogReg { options } => {
            for (k, &v) in values {
                match k.as_str() {
                    "lambda" => options.lambda = v,
                    "history_window" => options.history_window = v as usize,
                    _ => return Err(unknown(k)),
                }
            }
        }
        _ => {
            if let Some(k) = values.keys().next() {
                return Err(unknown(k));
            }
        }
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub point: Vec<f64>,
    pub values: BTreeMap<String, f64>,
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialHistory {
    pub trials: Vec<Trial>,
}

impl TrialHistory {
    pub fn successful(&self) -> impl Iterator<Item = (&Trial, f64)> {
        self.trials.iter().filter_map(|t| t.objective.map(|o| (t, o)))
    }

    /// Best successful trial; the earliest wins ties.
    pub fn best(&self) -> Option<&Trial> {
        let mut best: Option<(&Trial, f64)> = None;
        for (t, o) in self.successful() {
            if best.is_none_or(|(_, b)| o > b) {
                best = Some((t, o));
            }
        }
        best.map(|(t, _)| t)
    }

    /// Best objective seen after each trial.
    pub fn incumbent_trace(&self) -> Vec<Option<f64>> {
        let mut cur: Option<f64> = None;
        self.trials
            .iter()
            .map(|t| {
                if let Some(o) = t.objective {
                    cur = Some(cur.map_or(o, |c: f64| c.max(o)));
                }
                cur
            })
            .collect()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        for t in &self.trials {
            if t.point.len() != d || t.point.iter().any(|u| !(0.0..=1.0).contains(u)) {
                return Err(Error::data(format!("trial {} lies outside the unit cube", t.index)));
            }
            if t.objective.is_some_and(|o| !o.is_finite()) {
                return Err(Error::data(format!("trial {} has a non-finite objective", t.index)));
            }
        }
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut trials = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            trials.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?,
            );
        }
        Ok(TrialHistory { trials })
    }

    pub fn append_jsonl(path: &Path, trial: &Trial) -> Result<()> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let line = serde_json::to_string(trial).map_err(|e| Error::data(e.to_string()))?;
        writeln!(f, "{line}")?;
        Ok(())
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton point `index + 1` with a seeded Cranley–Patterson rotation.
pub fn quasi_random_point(index: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut rng = sub_rng(seed, tag::TUNER, u64::MAX);
    (0..d)
        .map(|j| {
            let shift: f64 = rng.gen();
            (radical_inverse(index as u64 + 1, PRIMES[j]) + shift).fract()
        })
        .collect()
}

/// The seeded candidate set for trial `index`.
pub fn candidates(index: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sub_rng(seed, tag::TUNER, index as u64);
    (0..N_CANDIDATES)
        .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Index of the largest EI in `cands` (first wins on ties) and its value.
pub fn argmax_ei(gp: &GaussianProcess, cands: &[Vec<f64>], best: f64) -> (usize, f64) {
    let mut arg = (0, f64::NEG_INFINITY);
    for (i, c) in cands.iter().enumerate() {
        let (m, s) = gp.predict(c);
        let ei = expected_improvement(m, s, best);
        if ei > arg.1 {
            arg = (i, ei);
        }
    }
    arg
}

/// Next point to evaluate, already snapped to the integer grid.
pub fn suggest_next(history: &TrialHistory, space: &SearchSpace, seed: u64) -> Result<Vec<f64>> {
    space.validate()?;
    history.validate(space.len())?;
    let index = history.trials.len();
    let d = space.len();
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) =
        history.successful().map(|(t, o)| (t.point.clone(), o)).unzip();
    if x.len() < WARMUP_TRIALS {
        return Ok(space.snap(&quasi_random_point(index, d, seed)));
    }
    if y.iter().all(|&v| v == y[0]) {
        log::info!("all {} objectives are equal; using a quasi-random point", y.len());
        return Ok(space.snap(&quasi_random_point(index, d, seed)));
    }
    let gp = match GaussianProcess::fit(&x, &y) {
        Ok(gp) => gp,
        Err(e) => {
            log::warn!("GP fit failed ({e}); using a quasi-random point");
            return Ok(space.snap(&quasi_random_point(index, d, seed)));
        }
    };
    let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cands = candidates(index, d, seed);
    let (i, _) = argmax_ei(&gp, &cands, best);
    Ok(space.snap(&cands[i]))
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: Trial,
    pub history: TrialHistory,
}

/// Runs `budget` new suggest/evaluate rounds on top of `history`.
///
/// `objective` maps decoded values to a score to maximize; errors and
/// non-finite scores are recorded as failed trials. `on_trial` sees every
/// trial as soon as it is recorded.
pub fn tune(
    space: &SearchSpace,
    budget: usize,
    seed: u64,
    mut history: TrialHistory,
    mut objective: impl FnMut(&BTreeMap<String, f64>) -> Result<f64>,
    mut on_trial: impl FnMut(&Trial) -> Result<()>,
) -> Result<TuneOutcome> {
    if budget == 0 {
        return Err(Error::config("tuning budget must be at least 1"));
    }
    for _ in 0..budget {
        let point = suggest_next(&history, space, seed)?;
        let values = space.decode(&point);
        let (objective, error) = match objective(&values) {
            Ok(v) if v.is_finite() => (Some(v), None),
            Ok(v) => (None, Some(format!("objective not finite: {v}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        if let Some(e) = &error {
            log::warn!("trial {} failed: {e}", history.trials.len());
        }
        let trial = Trial {
            index: history.trials.len(),
            point,
            values,
            objective,
            error,
        };
        on_trial(&trial)?;
        history.trials.push(trial);
    }
    let best = history
        .best()
        .cloned()
        .ok_or_else(|| Error::numeric("every tuning trial failed"))?;
    Ok(TuneOutcome { best, history })
}

/// Mean validation AUC at `horizon` over `inner_k` folds drawn inside the
/// training part of `outer_fold`. The outer test fold is never read.
pub fn inner_cv_objective(
    cohort: &Cohort,
    records: &[PatientRecord],
    folds: &Folds,
    outer_fold: usize,
    inner_k: usize,
    spec: &ModelSpec,
    horizon: usize,
    opts: &CvOptions,
) -> Result<f64> {
    let inner = cohort.subset(&folds.train_indices(outer_fold))?;
    let inner_folds = split_folds(&inner, inner_k, opts.seed ^ 0x5eed)?;
    let input = CvInput {
        cohort: &inner,
        records,
        folds: &inner_folds,
        truth: None,
    };
    let run = cross_validate(input, spec, opts)?;
    run.metrics
        .mean_auc(horizon)
        .ok_or_else(|| Error::data(format!("no inner fold has both classes at horizon {horizon}")))
}
