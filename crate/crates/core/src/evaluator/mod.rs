//! Metrics, cross-validation, permutation importance and attention
//! extraction.

mod attention;
mod cv;
mod importance;
mod metrics;


pub use attention::{attention_csv, extract_attention, AttentionRecord};
pub use cv::{
    cross_validate, cross_validate_many, evaluate_fold, fit_fold, prepare_fold, roc_csv, CellMetrics, CvInput,
    CvOptions, CvRun, FoldData, FoldMetrics, FoldModel, ModelSpec, OutOfFold, TrainedModel,
};
pub use importance::{
    importance_csv, permutation_importance, t_test_zero, transplant_column, ImportanceRecord,
};
pub use metrics::{
    choose_threshold, roc_auc, roc_curve, sens_prec, tpr_at, Confusion, RocPoint, ThresholdChoice,
};
