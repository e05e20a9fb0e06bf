//! Reference predictors: a Cox-style linear hazard score on the index day and
//! L1-penalized logistic regression over concatenated day histories.

mod logreg;
mod qrisk;

pub use logreg::{
    concat_history, logistic_loss_grad, logreg_predict, logreg_train, soft_threshold, stationarity_residual,
    LogRegOptions, SparseLinearModel,
};
pub use qrisk::{qrisk_score, HazardScoreConfig};
