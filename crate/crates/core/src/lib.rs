//! Influence measures, interventional mixtures and influence-preserving
//! debiasing for supervised classifiers.

pub mod dataset;
pub mod debias;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod influence;
pub mod kv;
pub mod model;
pub mod predictor;
pub mod pscf;
pub mod synth;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use experiment::{FittedModel, Method, SweepSpec};
pub use fairness::{ConfusionCounts, FairnessReport, GroupedOutcomes};
pub use influence::{BaselineSampler, ConditionalSampler, InfluenceEstimate, Measure, Sampling};
pub use model::{LinearLogisticModel, TrainConfig};
pub use predictor::{FnPredictor, LinearPredictor, Predictor};
pub use pscf::LinearSCM;
pub use synth::{Scenario, ScenarioConfig, Schema};
