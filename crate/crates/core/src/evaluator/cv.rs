use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{choose_threshold, roc_auc, roc_curve, sens_prec, RocPoint};
use crate::baselines::{
    concat_history, logreg_predict, logreg_train, qrisk_score, HazardScoreConfig, LogRegOptions,
    SparseLinearModel,
};
use crate::cohort::{Cohort, Folds};
use crate::ehr_model::{PatientRecord, PatientSequence};
use crate::error::{Error, Result};
use crate::featurizer::{
    build_vocabulary, CharlsonMap, Featurizer, PhysiologicalRanges, ScalerImputer, VocabularyOptions,
};
use crate::num::Tensor2;
use crate::par::Exec;
use crate::recurrent::{self, EpochLog, LabeledSequence, ModelConfig, RecurrentParams, Variant};
use crate::rng::{derive_seed, sub_rng, tag};
use crate::synth::GroundTruth;

/// What to fit inside each fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Scores every patient 0.5.
    Constant,
    /// Scores with the generator's true risk; needs ground truth.
    Oracle,
    Qrisk { config: HazardScoreConfig },
    LogReg { options: LogRegOptions },
    Recurrent { config: ModelConfig },
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Constant => "constant".into(),
            ModelSpec::Oracle => "oracle".into(),
            ModelSpec::Qrisk { .. } => "qrisk".into(),
            ModelSpec::LogReg { options } => format!("lr-{}", options.history_window),
            ModelSpec::Recurrent { config } => config.variant.as_str().into(),
        }
    }

    /// Rows of history the model reads.
    fn history(&self) -> usize {
        match self {
            ModelSpec::LogReg { options } => options.history_window,
            ModelSpec::Recurrent { config } => config.n_days_pad,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub seed: u64,
    /// Fraction of training pairs held out for early stopping and the
    /// threshold.
    pub val_fraction: f64,
    pub vocab: VocabularyOptions,
    pub ranges: PhysiologicalRanges,
    pub charlson: CharlsonMap,
    /// Horizons to fit and evaluate; `None` means all.
    pub horizons: Option<Vec<usize>>,
    /// `(h, ratio)`: training positives at horizon `h` are cut to at most
    /// `ratio` times the training positives at the longest horizon.
    pub subsample: Option<(usize, f64)>,
    pub exec: Exec,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            seed: 0,
            val_fraction: 0.15,
            vocab: VocabularyOptions::default(),
            ranges: PhysiologicalRanges::default(),
            charlson: CharlsonMap::default(),
            horizons: None,
            subsample: None,
            exec: Exec::Sequential,
        }
    }
}

/// Inputs shared by every fold.
#[derive(Clone, Copy)]
pub struct CvInput<'a> {
    pub cohort: &'a Cohort,
    pub records: &'a [PatientRecord],
    pub folds: &'a Folds,
    pub truth: Option<&'a GroundTruth>,
}

/// Everything fitted on one fold's training side, plus the unscaled
/// sequences of every cohort patient (truncated at the index day).
#[derive(Debug)]
pub struct FoldData {
    pub fold: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub featurizer: Featurizer,
    pub scaler: ScalerImputer,
    pub raw: Vec<PatientSequence>,
    pub labels: Vec<Vec<u8>>,
    /// Label masks after any training-side subsampling.
    pub label_mask: Vec<Vec<u8>>,
    pub patient_ids: Vec<String>,
}

impl FoldData {
    pub fn feature_names(&self) -> &[String] {
        &self.featurizer.vocab.feature_names
    }
}

/// A model fitted on one fold.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Constant,
    Oracle(Arc<HashMap<String, Vec<f64>>>),
    Qrisk(HazardScoreConfig),
    /// One model per horizon; `None` where the horizon was not fitted.
    LogReg(Vec<Option<SparseLinearModel>>),
    Recurrent {
        config: ModelConfig,
        /// One entry for multi-task variants, one per horizon otherwise.
        params: Vec<Option<RecurrentParams>>,
    },
}

impl TrainedModel {
    /// Per-horizon scores for cohort patient `idx` with input `raw`. NaN
    /// marks horizons the model was not fitted for.
    pub fn score(&self, data: &FoldData, idx: usize, raw: &PatientSequence, n_h: usize) -> Result<Vec<f64>> {
        Ok(match self {
            TrainedModel::Constant => vec![0.5; n_h],
            TrainedModel::Oracle(risks) => risks
                .get(&data.patient_ids[idx])
                .cloned()
                .ok_or_else(|| Error::data(format!("no ground truth for {}", data.patient_ids[idx])))?,
            TrainedModel::Qrisk(cfg) => {
                let last = raw.n_rows().checked_sub(1).ok_or_else(|| Error::data("empty sequence"))?;
                vec![qrisk_score(data.feature_names(), raw.matrix.row(last), cfg)?; n_h]
            }
            TrainedModel::LogReg(models) => {
                let mut out = vec![f64::NAN; n_h];
                let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
                for (h, m) in models.iter().enumerate() {
                    if let Some(m) = m {
                        let k = m.history_window;
                        if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(k) {
                            let scaled = data.scaler.transform(raw, k)?;
                            e.insert(concat_history(&scaled, k));
                        }
                        out[h] = logreg_predict(m, &cache[&k])?;
                    }
                }
                out
            }
            TrainedModel::Recurrent { config, params } => {
                let scaled = data.scaler.transform(raw, config.n_days_pad)?;
                if config.variant.is_multi_task() {
                    let p = params[0].as_ref().ok_or_else(|| Error::data("untrained model"))?;
                    recurrent::predict(p, config, &scaled)?.probabilities
                } else {
                    let mut out = vec![f64::NAN; n_h];
                    for (h, p) in params.iter().enumerate() {
                        if let Some(p) = p {
                            let cfg = ModelConfig {
                                target_horizon: h,
                                ..config.clone()
                            };
                            out[h] = recurrent::predict(p, &cfg, &scaled)?.probabilities[0];
                        }
                    }
                    out
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub auc: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    pub threshold: f64,
}

/// Per-fold, per-horizon metrics with mean and sample SD over the defined
/// folds. Undefined cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub model: String,
    pub horizons: Vec<String>,
    pub folds: Vec<Vec<Option<CellMetrics>>>,
    pub mean: Vec<Option<CellMetrics>>,
    pub sd: Vec<Option<CellMetrics>>,
    pub n_defined: Vec<usize>,
}

impl FoldMetrics {
    fn aggregate(model: String, horizons: Vec<String>, folds: Vec<Vec<Option<CellMetrics>>>) -> Self {
        let n_h = horizons.len();
        let mut mean = Vec::with_capacity(n_h);
        let mut sd = Vec::with_capacity(n_h);
        let mut n_defined = Vec::with_capacity(n_h);
        for h in 0..n_h {
            let cells: Vec<CellMetrics> = folds.iter().filter_map(|f| f[h]).collect();
            n_defined.push(cells.len());
            if cells.is_empty() {
                mean.push(None);
                sd.push(None);
                continue;
            }
            let stat = |get: fn(&CellMetrics) -> f64| {
                let v: Vec<f64> = cells.iter().map(get).collect();
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let s = if v.len() > 1 {
                    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
                } else {
                    0.0
                };
                (m, s)
            };
            let (a, sa) = stat(|c| c.auc);
            let (se, sse) = stat(|c| c.sensitivity);
            let (p, sp) = stat(|c| c.precision);
            let (f, sf) = stat(|c| c.f1);
            let (t, st) = stat(|c| c.threshold);
            mean.push(Some(CellMetrics {
                auc: a,
                sensitivity: se,
                precision: p,
                f1: f,
                threshold: t,
            }));
            sd.push(Some(CellMetrics {
                auc: sa,
                sensitivity: sse,
                precision: sp,
                f1: sf,
                threshold: st,
            }));
        }
        FoldMetrics {
            model,
            horizons,
            folds,
            mean,
            sd,
            n_defined,
        }
    }

    pub fn mean_auc(&self, h: usize) -> Option<f64> {
        self.mean[h].map(|c| c.auc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutOfFold {
    pub patient_id: String,
    pub fold: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub label_mask: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub data: Arc<FoldData>,
    pub model: TrainedModel,
    /// Per-horizon operating threshold; NaN where undefined.
    pub thresholds: Vec<f64>,
    pub logs: Vec<Vec<EpochLog>>,
}

#[derive(Debug, Clone)]
pub struct CvRun {
    pub spec: ModelSpec,
    pub metrics: FoldMetrics,
    pub predictions: Vec<OutOfFold>,
    pub models: Vec<FoldModel>,
}

impl CvRun {
    /// Pooled out-of-fold ROC curve at horizon `h`.
    pub fn roc(&self, h: usize) -> Result<Vec<RocPoint>> {
        let (s, y) = pooled(&self.predictions, h);
        roc_curve(&s, &y)
    }
}

fn pooled(preds: &[OutOfFold], h: usize) -> (Vec<f64>, Vec<u8>) {
    preds
        .iter()
        .filter(|p| p.label_mask[h] == 1 && p.scores[h].is_finite())
        .map(|p| (p.scores[h], p.labels[h]))
        .unzip()
}

fn truncate(record: &PatientRecord, day: i64) -> PatientRecord {
    PatientRecord {
        patient_id: record.patient_id.clone(),
        sex: record.sex,
        birth_day: record.birth_day,
        events: record.events.iter().filter(|e| e.day <= day).cloned().collect(),
    }
}

/// Splits training pairs into inner-train and validation, keeping pairs
/// together.
fn inner_split(cohort: &Cohort, train: &[usize], fraction: f64, seed: u64, fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut pairs: Vec<usize> = train.iter().map(|&i| cohort.patients[i].pair).collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs.shuffle(&mut sub_rng(seed, tag::SPLIT, fold as u64));
    let n_val = ((pairs.len() as f64 * fraction).round() as usize).min(pairs.len().saturating_sub(1));
    let val_pairs: std::collections::HashSet<usize> = pairs[..n_val].iter().copied().collect();
    train
        .iter()
        .copied()
        .partition(|&i| !val_pairs.contains(&cohort.patients[i].pair))
}

/// Fits the fold's featurizer and scaler on its training side only.
pub fn prepare_fold(input: CvInput<'_>, fold: usize, max_days: usize, opts: &CvOptions) -> Result<FoldData> {
    let cohort = input.cohort;
    let by_id: HashMap<&str, &PatientRecord> =
        input.records.iter().map(|r| (r.patient_id.as_str(), r)).collect();
    let record_of = |i: usize| -> Result<&PatientRecord> {
        let id = cohort.patients[i].patient_id.as_str();
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::data(format!("cohort patient {id} has no record")))
    };
    let test = input.folds.test_indices(fold);
    let train_all = input.folds.train_indices(fold);
    let (train, val) = inner_split(cohort, &train_all, opts.val_fraction, opts.seed, fold);

    let train_records: Vec<PatientRecord> = train_all
        .iter()
        .map(|&i| Ok(truncate(record_of(i)?, cohort.patients[i].index_day)))
        .collect::<Result<_>>()?;
    let vocab = build_vocabulary(&train_records, &opts.vocab, &opts.charlson);
    let featurizer = Featurizer::new(vocab, opts.ranges.clone(), opts.charlson.clone());
    let raw: Vec<PatientSequence> = (0..cohort.patients.len())
        .map(|i| {
            let p = &cohort.patients[i];
            Ok(featurizer.encode_sequence(record_of(i)?, Some(p.index_day), Some(max_days)))
        })
        .collect::<Result<_>>()?;
    let train_raw: Vec<PatientSequence> = train_all.iter().map(|&i| raw[i].clone()).collect();
    let scaler = ScalerImputer::fit(&train_raw)?;

    let labels: Vec<Vec<u8>> = cohort.patients.iter().map(|p| p.labels.clone()).collect();
    let mut label_mask: Vec<Vec<u8>> = cohort.patients.iter().map(|p| p.label_mask.clone()).collect();
    if let Some((h, ratio)) = opts.subsample {
        let last = cohort.horizons.len() - 1;
        let count = |hh: usize, mask: &[Vec<u8>]| {
            train_all
                .iter()
                .filter(|&&i| mask[i][hh] == 1 && labels[i][hh] == 1)
                .count()
        };
        let allowed = (ratio * count(last, &label_mask) as f64).floor() as usize;
        let mut positives: Vec<usize> = train_all
            .iter()
            .copied()
            .filter(|&i| label_mask[i][h] == 1 && labels[i][h] == 1)
            .collect();
        positives.shuffle(&mut sub_rng(opts.seed, tag::SUBSAMPLE, fold as u64));
        for &i in positives.iter().skip(allowed) {
            label_mask[i][h] = 0;
        }
    }
    Ok(FoldData {
        fold,
        train,
        val,
        test,
        featurizer,
        scaler,
        raw,
        labels,
        label_mask,
        patient_ids: cohort.patients.iter().map(|p| p.patient_id.clone()).collect(),
    })
}

fn oracle_table(truth: &GroundTruth, cohort: &Cohort) -> Result<HashMap<String, Vec<f64>>> {
    let by_id = truth.by_id();
    cohort
        .patients
        .iter()
        .map(|p| {
            let t = by_id
                .get(p.patient_id.as_str())
                .ok_or_else(|| Error::data(format!("no ground truth for {}", p.patient_id)))?;
            Ok((p.patient_id.clone(), truth.risks(t, &cohort.horizons)))
        })
        .collect()
}

fn labeled(data: &FoldData, idx: &[usize], n_days_pad: usize) -> Result<Vec<LabeledSequence>> {
    idx.iter()
        .map(|&i| {
            Ok(LabeledSequence {
                seq: data.scaler.transform(&data.raw[i], n_days_pad)?,
                labels: data.labels[i].clone(),
                label_mask: data.label_mask[i].clone(),
            })
        })
        .collect()
}

fn fit(
    spec: &ModelSpec,
    data: &FoldData,
    horizons: &[usize],
    n_h: usize,
    oracle: Option<&Arc<HashMap<String, Vec<f64>>>>,
    seed: u64,
) -> Result<(TrainedModel, Vec<Vec<EpochLog>>)> {
    let fold = data.fold as u64;
    Ok(match spec {
        ModelSpec::Constant => (TrainedModel::Constant, vec![]),
        ModelSpec::Oracle => {
            let table = oracle.ok_or_else(|| Error::config("oracle scorer needs ground truth"))?;
            (TrainedModel::Oracle(table.clone()), vec![])
        }
        ModelSpec::Qrisk { config } => {
            config.validate()?;
            (TrainedModel::Qrisk(config.clone()), vec![])
        }
        ModelSpec::LogReg { options } => {
            let k = options.history_window;
            let rows: Vec<Vec<f64>> = data
                .train
                .iter()
                .map(|&i| Ok(concat_history(&data.scaler.transform(&data.raw[i], k)?, k)))
                .collect::<Result<_>>()?;
            let mut models = vec![None; n_h];
            for &h in horizons {
                let keep: Vec<usize> = (0..rows.len())
                    .filter(|&r| data.label_mask[data.train[r]][h] == 1)
                    .collect();
                let x = Tensor2::from_rows(&keep.iter().map(|&r| rows[r].clone()).collect::<Vec<_>>())?;
                let y: Vec<u8> = keep.iter().map(|&r| data.labels[data.train[r]][h]).collect();
                let s = derive_seed(seed, tag::TRAIN, fold * 64 + h as u64);
                models[h] = Some(logreg_train(&x, &y, options, s)?);
            }
            (TrainedModel::LogReg(models), vec![])
        }
        ModelSpec::Recurrent { config } => {
            let train = labeled(data, &data.train, config.n_days_pad)?;
            let val = labeled(data, &data.val, config.n_days_pad)?;
            if config.variant.is_multi_task() {
                let cfg = ModelConfig {
                    n_horizons: n_h,
                    seed: derive_seed(config.seed ^ seed, tag::TRAIN, fold * 64),
                    ..config.clone()
                };
                let out = recurrent::train(&train, &val, &cfg)?;
                (
                    TrainedModel::Recurrent {
                        config: cfg,
                        params: vec![Some(out.params)],
                    },
                    vec![out.log],
                )
            } else {
                let mut params = vec![None; n_h];
                let mut logs = Vec::new();
                for &h in horizons {
                    let cfg = ModelConfig {
                        variant: Variant::Gru,
                        target_horizon: h,
                        n_horizons: n_h,
                        seed: derive_seed(config.seed ^ seed, tag::TRAIN, fold * 64 + 1 + h as u64),
                        ..config.clone()
                    };
                    let out = recurrent::train(&train, &val, &cfg)?;
                    params[h] = Some(out.params);
                    logs.push(out.log);
                }
                (
                    TrainedModel::Recurrent {
                        config: ModelConfig {
                            n_horizons: n_h,
                            ..config.clone()
                        },
                        params,
                    },
                    logs,
                )
            }
        }
    })
}

fn scores_for(model: &TrainedModel, data: &FoldData, idx: &[usize], n_h: usize) -> Result<Vec<Vec<f64>>> {
    idx.iter().map(|&i| model.score(data, i, &data.raw[i], n_h)).collect()
}

/// Threshold maximizing F1 on validation predictions, falling back to the
/// inner-training predictions when validation lacks a class.
fn thresholds(
    model: &TrainedModel,
    data: &FoldData,
    horizons: &[usize],
    n_h: usize,
) -> Result<Vec<f64>> {
    let val_scores = scores_for(model, data, &data.val, n_h)?;
    let mut out = vec![f64::NAN; n_h];
    let mut train_scores: Option<Vec<Vec<f64>>> = None;
    for &h in horizons {
        let pick = |idx: &[usize], scores: &[Vec<f64>]| {
            let (s, y): (Vec<f64>, Vec<u8>) = idx
                .iter()
                .zip(scores)
                .filter(|(&i, _)| data.label_mask[i][h] == 1)
                .map(|(&i, s)| (s[h], data.labels[i][h]))
                .unzip();
            choose_threshold(&s, &y).ok().map(|c| c.threshold)
        };
        out[h] = match pick(&data.val, &val_scores) {
            Some(t) => t,
            None => {
                if train_scores.is_none() {
                    train_scores = Some(scores_for(model, data, &data.train, n_h)?);
                }
                pick(&data.train, train_scores.as_ref().unwrap()).unwrap_or(f64::NAN)
            }
        };
    }
    Ok(out)
}

/// Evaluates one fitted model on the fold's test patients.
pub fn evaluate_fold(
    model: &TrainedModel,
    data: &FoldData,
    cohort: &Cohort,
    thresholds: &[f64],
    horizons: &[usize],
) -> Result<(Vec<Option<CellMetrics>>, Vec<OutOfFold>)> {
    let n_h = cohort.horizons.len();
    let scores = scores_for(model, data, &data.test, n_h)?;
    let mut cells = vec![None; n_h];
    for &h in horizons {
        let (s, y): (Vec<f64>, Vec<u8>) = data
            .test
            .iter()
            .zip(&scores)
            .filter(|(&i, _)| cohort.patients[i].label_mask[h] == 1)
            .map(|(&i, s)| (s[h], cohort.patients[i].labels[h]))
            .unzip();
        match roc_auc(&s, &y) {
            Ok(auc) => {
                let c = sens_prec(&s, &y, thresholds[h]);
                cells[h] = Some(CellMetrics {
                    auc,
                    sensitivity: c.sensitivity,
                    precision: c.precision,
                    f1: c.f1,
                    threshold: thresholds[h],
                });
            }
            Err(_) => log::warn!(
                "fold {} horizon {}: single class in test fold, cell undefined",
                data.fold,
                cohort.horizons.names()[h]
            ),
        }
    }
    let oof = data
        .test
        .iter()
        .zip(scores)
        .map(|(&i, s)| OutOfFold {
            patient_id: cohort.patients[i].patient_id.clone(),
            fold: data.fold,
            scores: s,
            labels: cohort.patients[i].labels.clone(),
            label_mask: cohort.patients[i].label_mask.clone(),
        })
        .collect();
    Ok((cells, oof))
}

/// Cross-validates several model specs over the same folds. Each fold fits
/// its featurizer, scaler and models on training patients only; folds run
/// through `opts.exec` and results are reduced in fold order.
pub fn cross_validate_many(input: CvInput<'_>, specs: &[ModelSpec], opts: &CvOptions) -> Result<Vec<CvRun>> {
    let cohort = input.cohort;
    let n_h = cohort.horizons.len();
    let horizons: Vec<usize> = opts.horizons.clone().unwrap_or_else(|| (0..n_h).collect());
    if horizons.iter().any(|&h| h >= n_h) {
        return Err(Error::config("evaluation horizon out of range"));
    }
    if input.folds.assignment.len() != cohort.patients.len() {
        return Err(Error::data("fold assignment does not match cohort"));
    }
    let oracle = match (specs.iter().any(|s| matches!(s, ModelSpec::Oracle)), input.truth) {
        (true, Some(t)) => Some(Arc::new(oracle_table(t, cohort)?)),
        (true, None) => return Err(Error::config("oracle scorer needs ground truth")),
        _ => None,
    };
    let max_days = specs.iter().map(ModelSpec::history).max().unwrap_or(1).max(1);
    let per_fold = opts.exec.try_map_range(input.folds.k, |fold| {
        let data = Arc::new(prepare_fold(input, fold, max_days, opts)?);
        specs
            .iter()
            .map(|spec| {
                let (model, logs) = fit(spec, &data, &horizons, n_h, oracle.as_ref(), opts.seed)?;
                let th = thresholds(&model, &data, &horizons, n_h)?;
                let (cells, oof) = evaluate_fold(&model, &data, cohort, &th, &horizons)?;
                Ok((
                    FoldModel {
                        data: data.clone(),
                        model,
                        thresholds: th,
                        logs,
                    },
                    cells,
                    oof,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let names = cohort.horizons.names();
    let mut runs = Vec::with_capacity(specs.len());
    for (s, spec) in specs.iter().enumerate() {
        let mut folds = Vec::new();
        let mut predictions = Vec::new();
        let mut models = Vec::new();
        for fold in &per_fold {
            let (m, cells, oof) = &fold[s];
            folds.push(cells.clone());
            predictions.extend(oof.iter().cloned());
            models.push(m.clone());
        }
        runs.push(CvRun {
            spec: spec.clone(),
            metrics: FoldMetrics::aggregate(spec.name(), names.clone(), folds),
            predictions,
            models,
        });
    }
    Ok(runs)
}

/// Prepares fold `fold` and fits `spec` on its training side, without
/// scoring the test patients.
pub fn fit_fold(input: CvInput<'_>, fold: usize, spec: &ModelSpec, opts: &CvOptions) -> Result<FoldModel> {
    let n_h = input.cohort.horizons.len();
    let horizons: Vec<usize> = opts.horizons.clone().unwrap_or_else(|| (0..n_h).collect());
    if horizons.iter().any(|&h| h >= n_h) {
        return Err(Error::config("horizon out of range"));
    }
    if fold >= input.folds.k {
        return Err(Error::config(format!("fold {fold} out of range (k = {})", input.folds.k)));
    }
    let oracle = match (spec, input.truth) {
        (ModelSpec::Oracle, Some(t)) => Some(Arc::new(oracle_table(t, input.cohort)?)),
        _ => None,
    };
    let data = Arc::new(prepare_fold(input, fold, spec.history().max(1), opts)?);
    let (model, logs) = fit(spec, &data, &horizons, n_h, oracle.as_ref(), opts.seed)?;
    let thresholds = thresholds(&model, &data, &horizons, n_h)?;
    Ok(FoldModel {
        data,
        model,
        thresholds,
        logs,
    })
}

pub fn cross_validate(input: CvInput<'_>, spec: &ModelSpec, opts: &CvOptions) -> Result<CvRun> {
    Ok(cross_validate_many(input, std::slice::from_ref(spec), opts)?.remove(0))
}

/// `threshold,fpr,tpr` rows.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    s
}
