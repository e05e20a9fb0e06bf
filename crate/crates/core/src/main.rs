use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ehr_cvd::baselines::HazardScoreConfig;
use ehr_cvd::cohort::{build_cohort, split_folds, Cohort, CohortOptions, Exclusion, Folds, HorizonSet, LabelMode};
use ehr_cvd::ehr_model::{assemble_records, Disease, EventDefinition, PatientRecord};
use ehr_cvd::evaluator::{
    attention_csv, cross_validate, cross_validate_many, evaluate_fold, extract_attention, fit_fold,
    importance_csv, permutation_importance, roc_csv, AttentionRecord, CvInput, CvOptions, CvRun, FoldMetrics,
    ModelSpec, TrainedModel,
};
use ehr_cvd::experiment::{parse_model, ExperimentConfig, ModelOverrides};
use ehr_cvd::featurizer::{ScalerImputer, Vocabulary};
use ehr_cvd::io::{self, ManifestBuilder};
use ehr_cvd::num::{write_checkpoint, Checkpoint, Tensor2};
use ehr_cvd::par::{with_jobs, Exec};
use ehr_cvd::recurrent::{EpochLog, Variant};
use ehr_cvd::report;
use ehr_cvd::synth::{bayes_auc, generate, GeneratorConfig, GroundTruth};
use ehr_cvd::tuner::{self, SearchSpace, TrialHistory};
use ehr_cvd::{Error, Result};

#[derive(Parser)]
#[command(name = "ehr-cvd", version, about = "Cardiovascular event prediction from longitudinal EHR sequences")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "EHR_CVD_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads for fold-level parallelism. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (events.jsonl + truth.json).
    Generate(GenerateArgs),
    /// Build the labeled, matched cohort and fold assignment.
    Cohort(CohortArgs),
    /// Fit the vocabulary and scaler on one fold and dump sequences.
    Featurize(FeaturizeArgs),
    /// Bayesian optimisation of one model's hyperparameters.
    Tune(TuneArgs),
    /// Fit one model on the training side of one fold.
    Train(TrainArgs),
    /// Cross-validate models and write metrics, predictions and ROC curves.
    Evaluate(EvaluateArgs),
    /// Permutation importance (ΔF1) with a t-test across folds and repeats.
    Importance(ImportanceArgs),
    /// Attention weights of the MT-Att-GRU for every test patient.
    Attention(AttentionArgs),
    /// Render tables and SVG figures from earlier artifacts.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    /// Generator config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_patients: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    disease: Option<String>,
}

#[derive(Args, Serialize, Clone)]
struct DataArgs {
    /// Raw events, JSON Lines.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Generator truth sidecar; enables the oracle scorer and Bayes AUC.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Experiment config JSON; replaces the data flags below.
    #[arg(long, conflicts_with_all = ["events", "demo"])]
    experiment: Option<PathBuf>,
    /// Use the bundled 200-patient demo experiment.
    #[arg(long, conflicts_with = "events")]
    demo: bool,
    #[arg(long, default_value = "mi")]
    disease: String,
    /// Finite horizons in days; an unbounded horizon is always added.
    #[arg(long, value_delimiter = ',', default_value = "30,91,365")]
    horizons: Vec<i64>,
    #[arg(long, default_value = "cumulative")]
    label_mode: String,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    days_pad: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// L1 strength for lr-<k> models.
    #[arg(long)]
    lambda: Option<f64>,
    /// Hazard-score coefficients JSON for the qrisk model.
    #[arg(long)]
    qrisk_config: Option<PathBuf>,
    /// A model spec JSON (e.g. best_spec.json from `tune`); replaces --model.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct CohortArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Serialize)]
struct FeaturizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value_t = 50)]
    max_days: usize,
}

#[derive(Args, Serialize)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mt_gru")]
    model: String,
    #[command(flatten)]
    params: ModelArgs,
    #[arg(long)]
    budget: Option<usize>,
    /// Outer fold whose training side hosts the inner folds.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, default_value_t = 3)]
    inner_folds: usize,
    /// Horizon index scored by the objective; defaults to the longest.
    #[arg(long)]
    horizon: Option<usize>,
    /// Continue from an existing trials.jsonl in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mt_gru")]
    model: String,
    #[command(flatten)]
    params: ModelArgs,
    #[arg(long, default_value_t = 0)]
    fold: usize,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated model names; defaults to the experiment's list.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[command(flatten)]
    params: ModelArgs,
    /// `h:ratio`, e.g. `0:0.2`, caps training positives at horizon h.
    #[arg(long)]
    subsample: Option<String>,
}

#[derive(Args, Serialize)]
struct ImportanceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mt_gru")]
    model: String,
    #[command(flatten)]
    params: ModelArgs,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Comma-separated feature names; all features when omitted.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
}

#[derive(Args, Serialize)]
struct AttentionArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    params: ModelArgs,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Directory holding evaluate/importance/attention artifacts; defaults
    /// to the output directory.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Patients shown in the attention figure.
    #[arg(long, default_value_t = 20)]
    attention_patients: usize,
}

/// Records, cohort and folds resolved from the data flags.
struct Loaded {
    records: Vec<PatientRecord>,
    truth: Option<GroundTruth>,
    cohort: Cohort,
    exclusions: Vec<Exclusion>,
    folds: Folds,
    seed: u64,
    experiment: Option<ExperimentConfig>,
    inputs: Vec<PathBuf>,
}

impl Loaded {
    fn input(&self) -> CvInput<'_> {
        CvInput {
            cohort: &self.cohort,
            records: &self.records,
            folds: &self.folds,
            truth: self.truth.as_ref(),
        }
    }

    fn cv_options(&self, exec: Exec) -> CvOptions {
        CvOptions {
            seed: self.seed,
            exec,
            ..Default::default()
        }
    }

    fn default_epochs(&self) -> Option<usize> {
        self.experiment.as_ref().and_then(|e| e.epochs)
    }
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let mut inputs = Vec::new();
    let experiment = match (&args.experiment, args.demo) {
        (Some(p), _) => {
            inputs.push(p.clone());
            Some(ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?)
        }
        (None, true) => Some(ExperimentConfig::demo()),
        _ => None,
    };
    let (disease, horizons, label_mode, k, seed) = match &experiment {
        Some(e) => (e.disease, e.horizons(), e.label_mode, e.folds, e.seed),
        None => {
            let disease: Disease = args.disease.parse()?;
            let label_mode = match args.label_mode.as_str() {
                "cumulative" => LabelMode::Cumulative,
                "disjoint" => LabelMode::Disjoint,
                other => return Err(Error::Usage(format!("unknown label mode '{other}'"))),
            };
            let seed = args
                .seed
                .ok_or_else(|| Error::Usage("--seed is required (no implicit seeds)".into()))?;
            (disease, HorizonSet::new(args.horizons.clone())?, label_mode, args.folds.unwrap_or(5), seed)
        }
    };
    let k = args.folds.unwrap_or(k);
    let seed = args.seed.unwrap_or(seed);
    let (records, truth) = match experiment.as_ref().and_then(|e| e.generator.clone()) {
        Some(g) => {
            let (records, truth) = generate(&g, Exec::Sequential)?;
            (records, Some(truth))
        }
        None => {
            let path = experiment
                .as_ref()
                .and_then(|e| e.events.clone())
                .or_else(|| args.events.clone())
                .ok_or_else(|| Error::Usage("one of --events, --experiment or --demo is required".into()))?;
            inputs.push(path.clone());
            let records = assemble_records(io::read_events_jsonl(&path)?)?;
            let truth = match &args.truth {
                Some(t) => {
                    inputs.push(t.clone());
                    Some(io::read_json::<GroundTruth>(t, "ground_truth")?)
                }
                None => None,
            };
            (records, truth)
        }
    };
    let opts = CohortOptions {
        label_mode,
        ..Default::default()
    };
    let (cohort, exclusions) = build_cohort(&records, &EventDefinition::default_for(disease), &horizons, &opts)?;
    let folds = split_folds(&cohort, k, seed)?;
    log::info!(
        "cohort: {} pairs, positives per horizon {:?}",
        cohort.n_pairs(),
        cohort.positive_counts()
    );
    Ok(Loaded {
        records,
        truth,
        cohort,
        exclusions,
        folds,
        seed,
        experiment,
        inputs,
    })
}

fn overrides(p: &ModelArgs, default_epochs: Option<usize>) -> Result<ModelOverrides> {
    let qrisk = match &p.qrisk_config {
        Some(path) => Some(HazardScoreConfig::from_json(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    Ok(ModelOverrides {
        hidden: p.hidden,
        epochs: p.epochs.or(default_epochs),
        days_pad: p.days_pad,
        learning_rate: p.learning_rate,
        dropout: p.dropout,
        batch_size: p.batch_size,
        patience: p.patience,
        lambda: p.lambda,
        qrisk,
    })
}

fn resolve_spec(name: &str, p: &ModelArgs, loaded: &Loaded) -> Result<ModelSpec> {
    match &p.spec {
        Some(path) => io::read_json(path, "model_spec"),
        None => parse_model(name, &overrides(p, loaded.default_epochs())?),
    }
}

fn manifest<T: Serialize>(stage: &str, args: &T, seeds: Vec<u64>, out: &Path) -> Result<ManifestBuilder> {
    Ok(ManifestBuilder::new(stage, serde_json::to_value(args)?, seeds, out))
}

fn add_inputs(m: &mut ManifestBuilder, loaded: &Loaded, params: Option<&ModelArgs>) -> Result<()> {
    for p in &loaded.inputs {
        m.input(p)?;
    }
    if let Some(params) = params {
        for p in params.qrisk_config.iter().chain(&params.spec) {
            m.input(p)?;
        }
    }
    Ok(())
}

fn write(out: &Path, name: &str, contents: &str, m: &mut ManifestBuilder) -> Result<()> {
    std::fs::write(out.join(name), contents)?;
    m.output(name)
}

fn write_json<T: Serialize>(out: &Path, name: &str, kind: &str, data: &T, m: &mut ManifestBuilder) -> Result<()> {
    io::write_json(&out.join(name), kind, data)?;
    m.output(name)
}

fn cmd_generate(a: &GenerateArgs, out: &Path, exec: Exec) -> Result<()> {
    let mut cfg: GeneratorConfig = match &a.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::config(format!("{}: {e}", p.display())))?,
        None => GeneratorConfig::default(),
    };
    if let Some(n) = a.n_patients {
        cfg.n_patients = n;
    }
    if let Some(d) = &a.disease {
        cfg.disease = d.parse()?;
    }
    cfg.seed = a.seed;
    let (records, truth) = generate(&cfg, exec)?;
    let mut m = manifest("generate", a, vec![a.seed], out)?;
    if let Some(p) = &a.config {
        m.input(p)?;
    }
    io::write_events_jsonl(&out.join("events.jsonl"), records.iter().flat_map(|r| r.to_events()))?;
    m.output("events.jsonl")?;
    write_json(out, "truth.json", "ground_truth", &truth, &mut m)?;
    write_json(out, "generator_config.json", "generator_config", &cfg, &mut m)?;
    m.finish()?;
    println!("generated {} patients -> {}", records.len(), out.display());
    Ok(())
}

fn cmd_cohort(a: &CohortArgs, out: &Path) -> Result<()> {
    let loaded = load(&a.data)?;
    let mut m = manifest("cohort", a, vec![loaded.seed], out)?;
    add_inputs(&mut m, &loaded, None)?;
    write_json(out, "cohort.json", "cohort", &loaded.cohort, &mut m)?;
    write_json(out, "exclusions.json", "exclusions", &loaded.exclusions, &mut m)?;
    let mut csv = String::from("patient_id,fold\n");
    for (p, f) in loaded.cohort.patients.iter().zip(&loaded.folds.assignment) {
        let _ = writeln!(csv, "{},{f}", io::csv_field(&p.patient_id));
    }
    write(out, "folds.csv", &csv, &mut m)?;
    m.finish()?;
    println!(
        "cohort: {} pairs, {} excluded, positives {:?}",
        loaded.cohort.n_pairs(),
        loaded.exclusions.len(),
        loaded.cohort.positive_counts()
    );
    Ok(())
}

#[derive(Serialize)]
struct SequenceRow<'a> {
    patient_id: &'a str,
    days: &'a [i64],
    /// Unscaled rows; null marks a missing value.
    rows: Vec<Vec<Option<f64>>>,
}

fn cmd_featurize(a: &FeaturizeArgs, out: &Path) -> Result<()> {
    let loaded = load(&a.data)?;
    let data = ehr_cvd::evaluator::prepare_fold(loaded.input(), a.fold, a.max_days, &loaded.cv_options(Exec::Sequential))?;
    let mut m = manifest("featurize", a, vec![loaded.seed], out)?;
    add_inputs(&mut m, &loaded, None)?;
    write_json(out, "vocabulary.json", "vocabulary", &data.featurizer.vocab, &mut m)?;
    write_json(out, "ranges.json", "physiological_ranges", &data.featurizer.ranges, &mut m)?;
    write_json(out, "scaler.json", "scaler", &data.scaler, &mut m)?;
    let mut lines = String::new();
    for seq in &data.raw {
        let first = seq.first_real_row();
        let rows = (first..seq.n_rows())
            .map(|r| seq.matrix.row(r).iter().map(|v| v.is_finite().then_some(*v)).collect())
            .collect();
        let row = SequenceRow {
            patient_id: &seq.patient_id,
            days: &seq.days,
            rows,
        };
        lines.push_str(&serde_json::to_string(&row)?);
        lines.push('\n');
    }
    write(out, "sequences.jsonl", &lines, &mut m)?;
    m.finish()?;
    println!(
        "featurized {} patients x {} features (fold {} training side)",
        data.raw.len(),
        data.feature_names().len(),
        a.fold
    );
    Ok(())
}

fn cmd_tune(a: &TuneArgs, out: &Path, exec: Exec) -> Result<()> {
    let loaded = load(&a.data)?;
    let base = resolve_spec(&a.model, &a.params, &loaded)?;
    let space = SearchSpace::for_spec(&base)?;
    let budget = a
        .budget
        .or(loaded.experiment.as_ref().map(|e| e.tuner_budget))
        .unwrap_or(tuner::DEFAULT_BUDGET);
    let horizon = a.horizon.unwrap_or(loaded.cohort.horizons.len() - 1);
    let trials_path = out.join("trials.jsonl");
    let history = if a.resume && trials_path.exists() {
        TrialHistory::read_jsonl(&trials_path)?
    } else {
        if trials_path.exists() {
            std::fs::remove_file(&trials_path)?;
        }
        TrialHistory::default()
    };
    let opts = loaded.cv_options(exec);
    let outcome = tuner::tune(
        &space,
        budget,
        loaded.seed,
        history,
        |values| {
            let spec = tuner::apply_values(&base, values)?;
            tuner::inner_cv_objective(
                &loaded.cohort,
                &loaded.records,
                &loaded.folds,
                a.fold,
                a.inner_folds,
                &spec,
                horizon,
                &opts,
            )
        },
        |t| {
            log::info!("trial {}: {:?} -> {:?}", t.index, t.values, t.objective);
            TrialHistory::append_jsonl(&trials_path, t)
        },
    )?;
    let best = tuner::apply_values(&base, &outcome.best.values)?;
    let mut m = manifest("tune", a, vec![loaded.seed], out)?;
    add_inputs(&mut m, &loaded, Some(&a.params))?;
    m.output("trials.jsonl")?;
    write_json(out, "best_spec.json", "model_spec", &best, &mut m)?;
    write_json(out, "search_space.json", "search_space", &space, &mut m)?;
    m.finish()?;
    println!(
        "best of {} trials: {:?} (inner AUC {:.4})",
        outcome.history.trials.len(),
        outcome.best.values,
        outcome.best.objective.unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainedArtifact<'a> {
    spec: &'a ModelSpec,
    fold: usize,
    thresholds: Vec<Option<f64>>,
    checkpoints: Vec<String>,
    vocabulary: &'a Vocabulary,
    scaler: &'a ScalerImputer,
}

fn log_csv(logs: &[Vec<EpochLog>]) -> String {
    let mut s = String::from("run,epoch,train_loss,val_loss,wall_ms\n");
    for (i, log) in logs.iter().enumerate() {
        for e in log {
            let _ = writeln!(s, "{i},{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.wall_ms);
        }
    }
    s
}

fn save_checkpoint(out: &Path, name: &str, ckpt: &Checkpoint, m: &mut ManifestBuilder) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(out.join(name))?);
    write_checkpoint(f, ckpt)?;
    m.output(name)
}

fn cmd_train(a: &TrainArgs, out: &Path) -> Result<()> {
    let loaded = load(&a.data)?;
    let spec = resolve_spec(&a.model, &a.params, &loaded)?;
    let opts = loaded.cv_options(Exec::Sequential);
    let fm = fit_fold(loaded.input(), a.fold, &spec, &opts)?;
    let mut m = manifest("train", a, vec![loaded.seed], out)?;
    add_inputs(&mut m, &loaded, Some(&a.params))?;
    let mut checkpoints = Vec::new();
    match &fm.model {
        TrainedModel::Recurrent { params, .. } => {
            for (h, p) in params.iter().enumerate() {
                if let Some(p) = p {
                    let name = if params.len() == 1 { "model.ckpt".to_string() } else { format!("model.h{h}.ckpt") };
                    save_checkpoint(out, &name, &Checkpoint::from_params(p), &mut m)?;
                    checkpoints.push(name);
                }
            }
        }
        TrainedModel::LogReg(models) => {
            for (h, lm) in models.iter().enumerate() {
                if let Some(lm) = lm {
                    let name = format!("model.h{h}.ckpt");
                    let ckpt = Checkpoint {
                        blocks: vec![
                            ("weights".into(), Tensor2::from_rows(std::slice::from_ref(&lm.weights))?),
                            ("intercept".into(), Tensor2::from_rows(&[vec![lm.intercept]])?),
                        ],
                    };
                    save_checkpoint(out, &name, &ckpt, &mut m)?;
                    checkpoints.push(name);
                }
            }
        }
        _ => {}
    }
    let art = TrainedArtifact {
        spec: &spec,
        fold: a.fold,
        thresholds: fm.thresholds.iter().map(|t| t.is_finite().then_some(*t)).collect(),
        checkpoints,
        vocabulary: &fm.data.featurizer.vocab,
        scaler: &fm.data.scaler,
    };
    write_json(out, "model.json", "trained_model", &art, &mut m)?;
    let horizons: Vec<usize> = (0..loaded.cohort.horizons.len()).collect();
    let (cells, _) = evaluate_fold(&fm.model, &fm.data, &loaded.cohort, &fm.thresholds, &horizons)?;
    write_json(out, "test_metrics.json", "fold_test_metrics", &cells, &mut m)?;
    std::fs::write(out.join("training_log.csv"), log_csv(&fm.logs))?;
    m.volatile("training_log.csv");
    m.finish()?;
    let aucs: Vec<String> = cells
        .iter()
        .map(|c| c.map(|c| format!("{:.3}", c.auc)).unwrap_or_else(|| "n/a".into()))
        .collect();
    println!("trained {} on fold {}; held-out AUC per horizon: {}", spec.name(), a.fold, aucs.join(" "));
    Ok(())
}

fn predictions_csv(run: &CvRun, names: &[String]) -> String {
    let mut s = String::from("patient_id,fold,horizon,score,label\n");
    for p in &run.predictions {
        for (h, name) in names.iter().enumerate() {
            if p.label_mask[h] == 1 && p.scores[h].is_finite() {
                let _ = writeln!(s, "{},{},{},{},{}", io::csv_field(&p.patient_id), p.fold, name, p.scores[h], p.labels[h]);
            }
        }
    }
    s
}

fn parse_subsample(s: &str) -> Result<(usize, f64)> {
    let bad = || Error::Usage(format!("--subsample expects h:ratio, got '{s}'"));
    let (h, r) = s.split_once(':').ok_or_else(bad)?;
    let h: usize = h.parse().map_err(|_| bad())?;
    let r: f64 = r.parse().map_err(|_| bad())?;
    if !(0.0..=1.0).contains(&r) {
        return Err(bad());
    }
    Ok((h, r))
}

fn cmd_evaluate(a: &EvaluateArgs, out: &Path, exec: Exec) -> Result<()> {
    let loaded = load(&a.data)?;
    let specs: Vec<ModelSpec> = if let Some(p) = &a.params.spec {
        vec![io::read_json(p, "model_spec")?]
    } else if !a.models.is_empty() {
        let o = overrides(&a.params, loaded.default_epochs())?;
        a.models.iter().map(|n| parse_model(n, &o)).collect::<Result<_>>()?
    } else if let Some(e) = &loaded.experiment {
        let o = overrides(&a.params, e.epochs)?;
        e.models.iter().map(|n| parse_model(n, &o)).collect::<Result<_>>()?
    } else {
        return Err(Error::Usage("--models is required without an experiment config".into()));
    };
    let mut opts = loaded.cv_options(exec);
    if let Some(s) = &a.subsample {
        opts.subsample = Some(parse_subsample(s)?);
    }
    let runs = cross_validate_many(loaded.input(), &specs, &opts)?;
    let mut m = manifest("evaluate", a, vec![loaded.seed], out)?;
    add_inputs(&mut m, &loaded, Some(&a.params))?;
    let metrics: Vec<FoldMetrics> = runs.iter().map(|r| r.metrics.clone()).collect();
    write_json(out, "metrics.json", "metrics", &metrics, &mut m)?;
    let names = loaded.cohort.horizons.names();
    for run in &runs {
        let name = run.spec.name();
        write(out, &format!("predictions_{name}.csv"), &predictions_csv(run, &names), &mut m)?;
        for h in 0..names.len() {
            if let Ok(points) = run.roc(h) {
                write(out, &format!("roc_{name}_h{h}.csv"), &roc_csv(&points), &mut m)?;
            }
        }
    }
    if let Some(truth) = &loaded.truth {
        let bayes: BTreeMap<String, Option<f64>> = names
            .iter()
            .enumerate()
            .map(|(h, n)| (n.clone(), bayes_auc(truth, &loaded.cohort, h).ok()))
            .collect();
        write_json(out, "bayes_auc.json", "bayes_auc", &bayes, &mut m)?;
    }
    m.finish()?;
    let rows = report::table2_csv(&metrics);
    let parsed: Vec<Vec<String>> = rows.lines().skip(1).map(io::csv_split).collect();
    print!("{}", report::table2_text(&parsed));
    Ok(())
}

fn cmd_importance(a: &ImportanceArgs, out: &Path, exec: Exec) -> Result<()> {
    let loaded = load(&a.data)?;
    let spec = resolve_spec(&a.model, &a.params, &loaded)?;
    let h = a.horizon.unwrap_or(loaded.cohort.horizons.len() - 1);
    let opts = CvOptions {
        horizons: Some(vec![h]),
        ..loaded.cv_options(exec)
    };
    let run = cross_validate(loaded.input(), &spec, &opts)?;
    let features = (!a.features.is_empty()).then_some(a.features.as_slice());
    let records = permutation_importance(&run.models, &loaded.cohort, h, features, a.repeats, loaded.seed)?;
    let mut m = manifest("importance", a, vec![loaded.seed], out)?;
    add_inputs(&mut m, &loaded, Some(&a.params))?;
    write(out, "importance.csv", &importance_csv(&records), &mut m)?;
    m.finish()?;
    let mut sorted: Vec<_> = records.iter().collect();
    sorted.sort_by(|x, y| y.mean_delta_f1.total_cmp(&x.mean_delta_f1));
    for r in sorted.iter().take(15) {
        println!("{:<45} {:+.4}  p={:.4}", r.feature, r.mean_delta_f1, r.p_value);
    }
    Ok(())
}

fn cmd_attention(a: &AttentionArgs, out: &Path, exec: Exec) -> Result<()> {
    let loaded = load(&a.data)?;
    let spec = resolve_spec("mt_att_gru", &a.params, &loaded)?;
    if !matches!(&spec, ModelSpec::Recurrent { config } if config.variant == Variant::MtAttGru) {
        return Err(Error::config("attention needs an mt_att_gru model"));
    }
    let run = cross_validate(loaded.input(), &spec, &loaded.cv_options(exec))?;
    let mut records: Vec<AttentionRecord> = Vec::new();
    for fm in &run.models {
        let TrainedModel::Recurrent { config, params } = &fm.model else {
            continue;
        };
        let Some(p) = params.first().and_then(Option::as_ref) else {
            continue;
        };
        for &i in &fm.data.test {
            let seq = fm.data.scaler.transform(&fm.data.raw[i], config.n_days_pad)?;
            records.extend(extract_attention(p, config, &seq)?);
        }
    }
    let mut m = manifest("attention", a, vec![loaded.seed], out)?;
    add_inputs(&mut m, &loaded, Some(&a.params))?;
    write(out, "attention.csv", &attention_csv(&records), &mut m)?;
    m.finish()?;
    println!("attention weights for {} patient-days", records.len());
    Ok(())
}

fn parse_f64(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

fn cmd_report(a: &ReportArgs, out: &Path) -> Result<()> {
    let input = a.input.clone().unwrap_or_else(|| out.to_path_buf());
    let metrics_path = input.join("metrics.json");
    if !metrics_path.exists() {
        return Err(Error::data(format!(
            "missing metrics artifact: {} (run `evaluate` first)",
            metrics_path.display()
        )));
    }
    let metrics: Vec<FoldMetrics> = io::read_json(&metrics_path, "metrics")?;
    let mut m = manifest("report", a, vec![], out)?;
    m.input(&metrics_path)?;
    write(out, "table2.csv", &report::table2_csv(&metrics), &mut m)?;
    let (_, rows) = io::read_csv(&out.join("table2.csv"))?;
    write(out, "table2.txt", &report::table2_text(&rows), &mut m)?;
    let horizons = metrics.first().map(|x| x.horizons.clone()).unwrap_or_default();
    for (h, hname) in horizons.iter().enumerate() {
        let mut curves = Vec::new();
        for fm in &metrics {
            let path = input.join(format!("roc_{}_h{h}.csv", fm.model));
            if !path.exists() {
                continue;
            }
            m.input(&path)?;
            let (_, rows) = io::read_csv(&path)?;
            let pts = rows.iter().map(|r| (parse_f64(&r[1]), parse_f64(&r[2]))).collect();
            let label = match fm.mean_auc(h) {
                Some(auc) => format!("{} (AUC {auc:.3})", fm.model),
                None => fm.model.clone(),
            };
            curves.push((label, pts));
        }
        if !curves.is_empty() {
            let svg = report::roc_svg(&format!("ROC, horizon {hname}"), &curves);
            write(out, &format!("roc_h{h}.svg"), &svg, &mut m)?;
        }
    }
    let imp = input.join("importance.csv");
    if imp.exists() {
        m.input(&imp)?;
        let (_, rows) = io::read_csv(&imp)?;
        let mut bars: Vec<report::ImportanceBar> = rows
            .iter()
            .map(|r| report::ImportanceBar {
                feature: r[0].clone(),
                mean: parse_f64(&r[1]),
                sd: parse_f64(&r[2]),
                p_value: parse_f64(&r[4]),
            })
            .collect();
        bars.sort_by(|x, y| y.mean.total_cmp(&x.mean).then_with(|| x.feature.cmp(&y.feature)));
        bars.truncate(30);
        write(out, "importance.svg", &report::importance_svg("Permutation importance", &bars), &mut m)?;
    }
    let att = input.join("attention.csv");
    if att.exists() {
        m.input(&att)?;
        let (_, rows) = io::read_csv(&att)?;
        let mut patients: Vec<(String, Vec<(i64, f64)>)> = Vec::new();
        for r in &rows {
            let day: i64 = r[1].parse().map_err(|_| Error::data("attention.csv: bad day"))?;
            match patients.last_mut() {
                Some((id, days)) if *id == r[0] => days.push((day, parse_f64(&r[2]))),
                _ => {
                    if patients.len() == a.attention_patients {
                        break;
                    }
                    patients.push((r[0].clone(), vec![(day, parse_f64(&r[2]))]));
                }
            }
        }
        write(out, "attention.svg", &report::attention_svg("Attention over observation days", &patients), &mut m)?;
    }
    m.finish()?;
    print!("{}", std::fs::read_to_string(out.join("table2.txt"))?);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    let exec = Exec::from_jobs(cli.jobs);
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, out, exec),
        Command::Cohort(a) => cmd_cohort(a, out),
        Command::Featurize(a) => cmd_featurize(a, out),
        Command::Tune(a) => cmd_tune(a, out, exec),
        Command::Train(a) => cmd_train(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out, exec),
        Command::Importance(a) => cmd_importance(a, out, exec),
        Command::Attention(a) => cmd_attention(a, out, exec),
        Command::Report(a) => cmd_report(a, out),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = with_jobs(cli.jobs, || run(&cli));
    if let Err(e) = result {
        if let Error::Diverged { last_good, .. } = &e {
            let path = cli.out.join("last_good.ckpt");
            if let Ok(f) = std::fs::File::create(&path) {
                if write_checkpoint(std::io::BufWriter::new(f), last_good).is_ok() {
                    eprintln!("last good parameters saved to {}", path.display());
                }
            }
        }
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
