//! Experiment configuration and model-name parsing for the CLI.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::{HazardScoreConfig, LogRegOptions};
use crate::cohort::{HorizonSet, LabelMode};
use crate::ehr_model::Disease;
use crate::error::{Error, Result};
use crate::evaluator::ModelSpec;
use crate::recurrent::{ModelConfig, Variant};
use crate::synth::GeneratorConfig;

const DEMO_JSON: &str = include_str!("../assets/demo_experiment.json");

fn default_folds() -> usize {
    5
}

fn default_budget() -> usize {
    crate::tuner::DEFAULT_BUDGET
}

fn default_horizons() -> Vec<i64> {
    HorizonSet::default().finite_days
}

/// Inputs come either from an event file or from an embedded generator
/// config. Seeds have no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub disease: Disease,
    #[serde(default = "default_horizons")]
    pub horizon_days: Vec<i64>,
    #[serde(default)]
    pub label_mode: LabelMode,
    pub models: Vec<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub tuner_budget: usize,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
}

impl ExperimentConfig {
    /// The bundled 200-patient demo.
    pub fn demo() -> Self {
        Self::from_json(DEMO_JSON).expect("bundled demo config is valid")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::config(format!(
                "experiment schema version {} is not supported",
                self.schema_version
            )));
        }
        HorizonSet::new(self.horizon_days.clone())?;
        match (&self.events, &self.generator) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::config("experiment needs exactly one of 'events' or 'generator'"))
            }
            (Some(p), None) if !p.exists() => {
                return Err(Error::config(format!("events file {} does not exist", p.display())))
            }
            (_, Some(g)) => g.validate()?,
            _ => {}
        }
        if self.models.is_empty() {
            return Err(Error::config("experiment lists no models"));
        }
        if self.folds < 2 {
            return Err(Error::config("experiment needs at least 2 folds"));
        }
        let overrides = ModelOverrides {
            epochs: self.epochs,
            ..Default::default()
        };
        for m in &self.models {
            parse_model(m, &overrides)?;
        }
        Ok(())
    }

    pub fn horizons(&self) -> HorizonSet {
        HorizonSet {
            finite_days: self.horizon_days.clone(),
        }
    }

    pub fn specs(&self) -> Result<Vec<ModelSpec>> {
        let overrides = ModelOverrides {
            epochs: self.epochs,
            ..Default::default()
        };
        self.models.iter().map(|m| parse_model(m, &overrides)).collect()
    }
}

/// Hyperparameter overrides applied on top of the defaults of whichever
/// model kind they concern.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelOverrides {
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub days_pad: Option<usize>,
    pub learning_rate: Option<f64>,
    pub dropout: Option<f64>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub lambda: Option<f64>,
    pub qrisk: Option<HazardScoreConfig>,
}

/// `constant`, `oracle`, `qrisk`, `qrisk-zero`, `lr-<k>`, `gru`, `mt_gru`
/// or `mt_att_gru`.
pub fn parse_model(name: &str, o: &ModelOverrides) -> Result<ModelSpec> {
    let name = name.trim();
    let spec = match name {
        "constant" => ModelSpec::Constant,
        "oracle" => ModelSpec::Oracle,
        "qrisk" => ModelSpec::Qrisk {
            config: o.qrisk.clone().unwrap_or_default(),
        },
        "qrisk-zero" => ModelSpec::Qrisk {
            config: HazardScoreConfig::zero(HazardScoreConfig::default().baseline_survival),
        },
        _ if name.starts_with("lr-") => {
            let k: usize = name[3..]
                .parse()
                .map_err(|_| Error::Usage(format!("bad history window in '{name}'")))?;
            if k == 0 {
                return Err(Error::Usage("history window must be positive".into()));
            }
            let mut options = LogRegOptions {
                history_window: k,
                ..Default::default()
            };
            if let Some(l) = o.lambda {
                options.lambda = l;
            }
            ModelSpec::LogReg { options }
        }
        _ => {
            let variant: Variant = name
                .parse()
                .map_err(|_| Error::Usage(format!("unknown model '{name}'")))?;
            let mut config = ModelConfig {
                variant,
                ..Default::default()
            };
            if let Some(v) = o.hidden {
                config.n_hidden = v;
            }
            if let Some(v) = o.epochs {
                config.epochs = v;
            }
            if let Some(v) = o.days_pad {
                config.n_days_pad = v;
            }
            if let Some(v) = o.learning_rate {
                config.learning_rate = v;
            }
            if let Some(v) = o.dropout {
                config.dropout = v;
            }
            if let Some(v) = o.batch_size {
                config.batch_size = v;
            }
            if let Some(v) = o.patience {
                config.patience = v;
            }
            config.validate()?;
            ModelSpec::Recurrent { config }
        }
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_config_is_valid() {
        let d = ExperimentConfig::demo();
        assert_eq!(d.generator.as_ref().unwrap().n_patients, 200);
        assert_eq!(d.specs().unwrap().len(), d.models.len());
    }

    #[test]
    fn model_names_parse() {
        let o = ModelOverrides {
            lambda: Some(0.5),
            hidden: Some(3),
            ..Default::default()
        };
        match parse_model("lr-50", &o).unwrap() {
            ModelSpec::LogReg { options } => {
                assert_eq!(options.history_window, 50);
                assert_eq!(options.lambda, 0.5);
            }
            other => panic!("{other:?}"),
        }
        match parse_model("mt_att_gru", &o).unwrap() {
            ModelSpec::Recurrent { config } => {
                assert_eq!(config.variant, Variant::MtAttGru);
                assert_eq!(config.n_hidden, 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_model("lstm", &o).is_err());
        assert!(parse_model("lr-x", &o).is_err());
        assert!(parse_model("lr-0", &o).is_err());
        for n in ["constant", "oracle", "qrisk", "qrisk-zero", "gru", "mt_gru"] {
            assert!(parse_model(n, &o).is_ok(), "{n}");
        }
    }

    #[test]
    fn config_needs_one_data_source_and_a_seed() {
        let base = r#"{"schema_version":1,"disease":"mi","models":["gru"],"seed":1}"#;
        assert!(ExperimentConfig::from_json(base).is_err());
        let no_seed = r#"{"schema_version":1,"disease":"mi","models":["gru"],"generator":{}}"#;
        assert!(ExperimentConfig::from_json(no_seed).is_err());
        let ok = r#"{"schema_version":1,"disease":"mi","models":["gru"],"seed":1,"generator":{"n_patients":50}}"#;
        let cfg = ExperimentConfig::from_json(ok).unwrap();
        assert_eq!(cfg.folds, 5);
        let missing = r#"{"schema_version":1,"disease":"mi","models":["gru"],"seed":1,"events":"/nonexistent/e.jsonl"}"#;
        assert!(ExperimentConfig::from_json(missing).is_err());
    }
}
