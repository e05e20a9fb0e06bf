use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{batch_loss, loss_and_grad};
use super::params::RecurrentParams;
use super::ModelConfig;
use crate::ehr_model::PatientSequence;
use crate::error::{Error, Result};
use crate::num::{AdamConfig, AdamState, Checkpoint};
use crate::rng::{sub_rng, tag};

/// A scaled, padded sequence with the full per-horizon label vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub seq: PatientSequence,
    pub labels: Vec<u8>,
    pub label_mask: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Wall-clock milliseconds; the only non-reproducible column.
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: RecurrentParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainOutput {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,wall_ms\n");
        for e in &self.log {
            s.push_str(&format!("{},{},{},{:.1}\n", e.epoch, e.train_loss, e.val_loss, e.wall_ms));
        }
        s
    }
}

fn split_targets(cfg: &ModelConfig, data: &[&LabeledSequence]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    data.iter().map(|d| cfg.targets(&d.labels, &d.label_mask)).unzip()
}

fn full_loss(params: &RecurrentParams, cfg: &ModelConfig, data: &[LabeledSequence]) -> Result<f64> {
    let refs: Vec<&LabeledSequence> = data.iter().collect();
    let seqs: Vec<&PatientSequence> = refs.iter().map(|d| &d.seq).collect();
    let (t, m) = split_targets(cfg, &refs);
    batch_loss(params, &seqs, &t, &m)
}

/// Mini-batch Adam with seeded shuffling and early stopping on validation
/// loss. Returns the parameters of the best validation epoch.
pub fn train(train_set: &[LabeledSequence], val_set: &[LabeledSequence], cfg: &ModelConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let n_features = train_set
        .first()
        .map(|d| d.seq.n_features())
        .ok_or_else(|| Error::data("empty training set"))?;
    if train_set.iter().chain(val_set).any(|d| d.seq.n_features() != n_features) {
        return Err(Error::data("training sequences differ in feature count"));
    }
    let mut params = RecurrentParams::init(n_features, cfg);
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: cfg.learning_rate,
            ..Default::default()
        },
    );
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let nh = cfg.n_hidden;
    let keep = 1.0 - cfg.dropout;
    let diverged = |epoch: usize, best: &RecurrentParams| Error::Diverged {
        epoch,
        last_good: Box::new(Checkpoint::from_params(best)),
    };

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut rng = sub_rng(cfg.seed, tag::TRAIN, epoch as u64);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        let mut total_mask = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSequence> = chunk.iter().map(|&i| &train_set[i]).collect();
            let seqs: Vec<&PatientSequence> = batch.iter().map(|d| &d.seq).collect();
            let (t, m) = split_targets(cfg, &batch);
            let masks: Option<Vec<Vec<f64>>> = (cfg.dropout > 0.0).then(|| {
                (0..batch.len())
                    .map(|_| {
                        (0..nh)
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect()
                    })
                    .collect()
            });
            let (loss, grads) = loss_and_grad(&params, &seqs, &t, &m, masks.as_deref())?;
            if !loss.is_finite() {
                return Err(diverged(epoch, &best));
            }
            let n_mask: f64 = m.iter().flatten().sum();
            weighted += loss * n_mask;
            total_mask += n_mask;
            if adam.step(&mut params, &grads).is_err() {
                return Err(diverged(epoch, &best));
            }
        }
        let train_loss = weighted / total_mask.max(1.0);
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            full_loss(&params, cfg, val_set)?
        };
        if !val_loss.is_finite() {
            return Err(diverged(epoch, &best));
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        if val_loss < best_loss {
            best_loss = val_loss;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutput {
        params: best,
        log,
        best_epoch,
    })
}
