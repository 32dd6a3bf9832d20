//! Removing the protected attribute's influence while preserving the
//! influence of every other feature.

pub mod loss;
pub mod mixture;
pub mod nested;
pub mod opt;
pub mod polynomial;

pub use loss::{influence_preservation_loss, Granularity, LossConfig, LossProblem};
pub use mixture::{empirical_levels, interventional_mixture, mim, MixtureModel};
pub use nested::{nested_removal, DynPredictor, NestedModel, PipelineStage};
pub use opt::{opt_fit, OptConfig, OptFit};
pub use polynomial::PolynomialToyModel;
