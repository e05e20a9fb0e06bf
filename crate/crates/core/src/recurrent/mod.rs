//! GRU sequence classifiers: single-task GRU, multi-task MT-GRU and
//! MT-Att-GRU with Luong "general" attention over observation days.
//!
//! Gradients are derived by hand (BPTT through the cell, the attention
//! block and the heads) and checked against finite differences in tests.

mod model;
mod params;
mod train;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use model::{
    attention_combine, gru_cell_forward, heads_forward, loss_and_grad, predict, sequence_forward,
    AttentionOutput, Prediction, SequenceStates,
};
pub use params::{AttentionParams, GruParams, HeadParams, RecurrentParams};
pub use train::{train, EpochLog, LabeledSequence, TrainOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Gru,
    MtGru,
    MtAttGru,
}

impl Variant {
    pub fn is_multi_task(self) -> bool {
        !matches!(self, Variant::Gru)
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::MtAttGru)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Gru => "gru",
            Variant::MtGru => "mt_gru",
            Variant::MtAttGru => "mt_att_gru",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(Variant::Gru),
            "mt_gru" => Ok(Variant::MtGru),
            "mt_att_gru" => Ok(Variant::MtAttGru),
            other => Err(Error::config(format!("unknown model variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub n_hidden: usize,
    pub n_days_pad: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Horizon index predicted by the single-task variant.
    pub target_horizon: usize,
    /// Number of heads for the multi-task variants.
    pub n_horizons: usize,
    /// Inverted dropout on the final representation during training.
    #[serde(default)]
    pub dropout: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::MtGru,
            n_hidden: 8,
            n_days_pad: 50,
            learning_rate: 3e-3,
            epochs: 40,
            batch_size: 32,
            target_horizon: 3,
            n_horizons: 4,
            dropout: 0.3,
            patience: 10,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn n_outputs(&self) -> usize {
        if self.variant.is_multi_task() {
            self.n_horizons
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hidden == 0 || self.n_days_pad == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("n_hidden, n_days_pad, epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.n_horizons == 0 {
            return Err(Error::config("n_horizons must be positive"));
        }
        if !self.variant.is_multi_task() && self.target_horizon >= self.n_horizons {
            return Err(Error::config(format!(
                "target horizon {} outside 0..{}",
                self.target_horizon, self.n_horizons
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Picks the training targets and their mask out of full per-horizon
    /// label vectors.
    pub fn targets(&self, labels: &[u8], mask: &[u8]) -> (Vec<f64>, Vec<f64>) {
        if self.variant.is_multi_task() {
            (
                labels.iter().take(self.n_horizons).map(|&v| v as f64).collect(),
                mask.iter().take(self.n_horizons).map(|&v| v as f64).collect(),
            )
        } else {
            (
                vec![labels[self.target_horizon] as f64],
                vec![mask[self.target_horizon] as f64],
            )
        }
    }
}
