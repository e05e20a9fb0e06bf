use serde::{Deserialize, Serialize};

use crate::ehr_model::PatientSequence;
use crate::error::{Error, Result};
use crate::recurrent::{predict, ModelConfig, RecurrentParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub patient_id: String,
    pub day: i64,
    pub weight: f64,
}

/// Attention weights of an MT-Att-GRU over the real days of a scaled,
/// padded sequence.
pub fn extract_attention(params: &RecurrentParams, cfg: &ModelConfig, seq: &PatientSequence) -> Result<Vec<AttentionRecord>> {
    if !cfg.variant.has_attention() {
        return Err(Error::config(format!(
            "attention weights need variant mt_att_gru, got {}",
            cfg.variant.as_str()
        )));
    }
    let weights = predict(params, cfg, seq)?
        .attention
        .ok_or_else(|| Error::data("model returned no attention weights"))?;
    Ok(weights
        .into_iter()
        .map(|(day, weight)| AttentionRecord {
            patient_id: seq.patient_id.clone(),
            day,
            weight,
        })
        .collect())
}

pub fn attention_csv(records: &[AttentionRecord]) -> String {
    let mut s = String::from("patient_id,day,weight\n");
    for r in records {
        s.push_str(&format!("{},{},{}\n", r.patient_id, r.day, r.weight));
    }
    s
}
