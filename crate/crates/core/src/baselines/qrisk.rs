use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Linear hazard score configuration: `risk = 1 − S₀^exp(Σ β·(x − centre))`.
///
/// Coefficients are keyed by feature name. Features the data does not carry
/// (or that are missing on the index day) contribute nothing, which is the
/// same as a zero coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardScoreConfig {
    pub schema_version: u32,
    pub coefficients: BTreeMap<String, f64>,
    pub baseline_survival: f64,
    #[serde(default)]
    pub centering: BTreeMap<String, f64>,
}

impl HazardScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.baseline_survival > 0.0 && self.baseline_survival < 1.0) {
            return Err(Error::config(format!(
                "baseline survival {} must lie in (0, 1)",
                self.baseline_survival
            )));
        }
        if self.coefficients.values().any(|b| !b.is_finite()) {
            return Err(Error::config("non-finite hazard coefficient"));
        }
        Ok(())
    }

    /// All coefficients zero: every patient gets `1 − S₀`.
    pub fn zero(baseline_survival: f64) -> Self {
        HazardScoreConfig {
            schema_version: 1,
            coefficients: BTreeMap::new(),
            baseline_survival,
            centering: BTreeMap::new(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: HazardScoreConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for HazardScoreConfig {
    /// A small synthetic coefficient set over features this crate produces.
    /// It is not a published risk equation.
    fn default() -> Self {
        let coefficients = [
            ("demographic:AGE", 0.05),
            ("demographic:SEX", 0.3),
            ("vital:SBP:median", 0.012),
            ("demographic:BMI:median", 0.02),
            ("charlson:diabetes_without_complication", 0.6),
            ("charlson:congestive_heart_failure", 0.5),
            ("charlson:renal_disease", 0.4),
        ];
        let centering = [
            ("demographic:AGE", 60.0),
            ("demographic:SEX", 0.5),
            ("vital:SBP:median", 130.0),
            ("demographic:BMI:median", 27.0),
        ];
        HazardScoreConfig {
            schema_version: 1,
            coefficients: coefficients.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            baseline_survival: 0.95,
            centering: centering.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// Risk from the unscaled feature row of the index day. `names` and
/// `values` are aligned; NaN values count as missing.
pub fn qrisk_score(names: &[String], values: &[f64], cfg: &HazardScoreConfig) -> Result<f64> {
    cfg.validate()?;
    if names.len() != values.len() {
        return Err(Error::data("feature names and values differ in length"));
    }
    let mut lp = 0.0;
    for (name, &x) in names.iter().zip(values) {
        if x.is_nan() {
            continue;
        }
        if let Some(beta) = cfg.coefficients.get(name) {
            let centre = cfg.centering.get(name).copied().unwrap_or(0.0);
            lp += beta * (x - centre);
        }
    }
    Ok(1.0 - cfg.baseline_survival.powf(lp.exp()))
}
