//! Shipped, user-editable featurization configs: the Charlson ICD-10 map and
//! physiological ranges.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::ehr_model::normalize_code;
use crate::error::{Error, Result};

const CHARLSON_JSON: &str = include_str!("../../assets/charlson_icd10.json");
const RANGES_JSON: &str = include_str!("../../assets/physiological_ranges.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharlsonCondition {
    pub name: String,
    pub icd10_prefixes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharlsonMap {
    pub schema_version: u32,
    pub conditions: Vec<CharlsonCondition>,
}

impl CharlsonMap {
    pub fn from_json(s: &str) -> Result<Self> {
        let mut map: CharlsonMap = serde_json::from_str(s)?;
        for c in &mut map.conditions {
            if c.icd10_prefixes.is_empty() {
                return Err(Error::config(format!("charlson condition '{}' has no codes", c.name)));
            }
            c.icd10_prefixes = c.icd10_prefixes.iter().map(|p| normalize_code(p)).collect();
        }
        Ok(map)
    }

    /// Indices of every condition whose family contains `code`.
    pub fn conditions_for(&self, code: &str) -> impl Iterator<Item = usize> + '_ {
        let code = normalize_code(code);
        self.conditions
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.icd10_prefixes.iter().any(|p| code.starts_with(p.as_str())))
            .map(|(i, _)| i)
    }
}

impl Default for CharlsonMap {
    fn default() -> Self {
        Self::from_json(CHARLSON_JSON).expect("bundled charlson map is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub low: f64,
    pub high: f64,
}

impl Range {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.low && v <= self.high
    }
}

/// Plausible bounds per continuous variable, keyed by normalized code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysiologicalRanges {
    pub schema_version: u32,
    pub ranges: BTreeMap<String, Range>,
}

impl PhysiologicalRanges {
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: PhysiologicalRanges = serde_json::from_str(s)?;
        let mut ranges = BTreeMap::new();
        for (k, r) in raw.ranges {
            if !(r.low < r.high) {
                return Err(Error::config(format!("range for '{k}' needs low < high")));
            }
            ranges.insert(normalize_code(&k), r);
        }
        Ok(PhysiologicalRanges {
            schema_version: raw.schema_version,
            ranges,
        })
    }

    pub fn get(&self, code: &str) -> Option<Range> {
        self.ranges.get(&normalize_code(code)).copied()
    }
}

impl Default for PhysiologicalRanges {
    fn default() -> Self {
        Self::from_json(RANGES_JSON).expect("bundled ranges are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_load() {
        let c = CharlsonMap::default();
        assert_eq!(c.conditions.len(), 17);
        let hits: Vec<usize> = c.conditions_for("i21.9").collect();
        assert_eq!(c.conditions[hits[0]].name, "myocardial_infarction");
        assert_eq!(c.conditions_for("E11.9").count(), 1);
        assert_eq!(c.conditions_for("Z00").count(), 0);
        let r = PhysiologicalRanges::default();
        assert!(r.get("sbp").unwrap().contains(120.0));
        assert!(PhysiologicalRanges::from_json(
            r#"{"schema_version":1,"ranges":{"x":{"low":2.0,"high":1.0}}}"#
        )
        .is_err());
    }
}
