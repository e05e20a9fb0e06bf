pub mod baselines;
pub mod cohort;
pub mod ehr_model;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod featurizer;
pub mod io;
pub mod num;
pub mod par;
pub mod recurrent;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tuner;

pub use error::{Error, Result};
