//! Nested removal of indirect discrimination.
//!
//! Features that the protected attribute influences unfairly are modelled
//! from their parents, debiased with the marginal interventional mixture,
//! and substituted into everything downstream before the final model is
//! itself mixed over `Z`.

use crate::dataset::Dataset;
use crate::debias::mixture::empirical_levels;
use crate::error::{Error, Result};
use crate::predictor::Predictor;

pub type DynPredictor = Box<dyn Predictor + Send + Sync>;

/// A model that recomputes one column from the rest of the row.
pub struct PipelineStage {
    pub column: usize,
    /// Columns the model reads; used only for dependency ordering.
    pub parents: Vec<usize>,
    pub model: DynPredictor,
    /// Whether the protected attribute's influence on this column is unfair.
    pub unfair: bool,
}

impl PipelineStage {
    pub fn new(column: usize, parents: Vec<usize>, model: DynPredictor, unfair: bool) -> Self {
        Self {
            column,
            parents,
            model,
            unfair,
        }
    }
}

/// The debiased composite model.
pub struct NestedModel {
    dim: usize,
    stages: Vec<PipelineStage>,
    final_model: DynPredictor,
    protected: Vec<usize>,
    levels: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl NestedModel {
    fn mix(&self, model: &dyn Predictor, point: &mut [f64]) -> f64 {
        let saved: Vec<f64> = self.protected.iter().map(|&j| point[j]).collect();
        let mut acc = 0.0;
        for (level, &w) in self.levels.iter().zip(&self.weights) {
            for (&j, &v) in self.protected.iter().zip(level) {
                point[j] = v;
            }
            acc += w * model.predict(point);
        }
        for (&j, &v) in self.protected.iter().zip(&saved) {
            point[j] = v;
        }
        acc
    }

    /// The row after every stage has rewritten its column.
    pub fn corrected_row(&self, row: &[f64]) -> Vec<f64> {
        let mut point = row.to_vec();
        for stage in &self.stages {
            let v = if stage.unfair {
                self.mix(stage.model.as_ref(), &mut point)
            } else {
                stage.model.predict(&point)
            };
            point[stage.column] = v;
        }
        point
    }

    /// Stage columns in evaluation order.
    pub fn order(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.column).collect()
    }
}

impl Predictor for NestedModel {
    fn n_features(&self) -> usize {
        self.dim
    }

    fn predict(&self, row: &[f64]) -> f64 {
        let mut point = self.corrected_row(row);
        self.mix(self.final_model.as_ref(), &mut point)
    }
}

/// Orders the stages so every stage comes after the stages producing its
/// parents, keeping the given order where it already works.
fn topological(stages: Vec<PipelineStage>) -> Result<Vec<PipelineStage>> {
    let n = stages.len();
    let producer = |col: usize| stages.iter().position(|s| s.column == col);
    let mut deps: Vec<Vec<usize>> = Vec::with_capacity(n);
    for (k, s) in stages.iter().enumerate() {
        if stages[..k].iter().any(|o| o.column == s.column) {
            return Err(Error::invalid(format!("column {} has more than one stage", s.column)));
        }
        let mut d: Vec<usize> = s.parents.iter().filter_map(|&p| producer(p)).collect();
        if d.contains(&k) {
            return Err(Error::CyclicDependency(s.column));
        }
        d.dedup();
        deps.push(d);
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&k| !done[k] && deps[k].iter().all(|&d| done[d]));
        match next {
            Some(k) => {
                done[k] = true;
                order.push(k);
            }
            None => {
                let stuck = (0..n).find(|&k| !done[k]).expect("some stage is pending");
                return Err(Error::CyclicDependency(stages[stuck].column));
            }
        }
    }
    let mut slots: Vec<Option<PipelineStage>> = stages.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|k| slots[k].take().expect("each stage once")).collect())
}

/// Builds the nested debiased model: unfair stages are mixed over the
/// empirical marginal of `Z`, fair stages are recomputed from corrected
/// inputs, and the final model is mixed over `Z`.
pub fn nested_removal(
    stages: Vec<PipelineStage>,
    final_model: DynPredictor,
    data: &Dataset,
) -> Result<NestedModel> {
    let dim = data.n_cols();
    if data.protected().is_empty() {
        return Err(Error::invalid("dataset has no protected columns"));
    }
    for m in stages.iter().map(|s| &s.model).chain(std::iter::once(&final_model)) {
        if m.n_features() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.n_features(),
            });
        }
    }
    for s in &stages {
        if s.column >= dim || s.parents.iter().any(|&p| p >= dim) {
            return Err(Error::invalid("stage column out of range"));
        }
        if data.is_protected(s.column) {
            return Err(Error::invalid(format!("stage rewrites protected column {}", s.column)));
        }
    }
    let stages = topological(stages)?;
    let (levels, weights) = empirical_levels(data);
    Ok(NestedModel {
        dim,
        stages,
        final_model,
        protected: data.protected().to_vec(),
        levels,
        weights,
    })
}
