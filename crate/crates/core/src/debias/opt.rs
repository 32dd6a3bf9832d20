//! Two-stage influence-preserving training.
//!
//! Stage 1 fits a logistic model on the unprotected columns by cross-entropy.
//! Stage 2 starts from it and runs ADAM on an influence-preservation loss
//! whose baseline draws are frozen for the whole run.

use crate::dataset::Dataset;
use crate::debias::loss::{Granularity, LossConfig, LossProblem};
use crate::error::Result;
use crate::influence::Measure;
use crate::kv::KeyValues;
use crate::model::{train_logistic, Adam, LinearLogisticModel, TrainConfig};
use crate::predictor::Predictor;

/// Consecutive loss increases after which stage 2 gives up.
const MAX_INCREASES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub measure: Measure,
    pub granularity: Granularity,
    pub learning_rate: f64,
    pub epochs: usize,
    pub mc_samples: usize,
    pub eval_rows: usize,
    pub seed: u64,
    /// Cross-entropy fit of the stage-1 initializer.
    pub stage1: TrainConfig,
}

impl OptConfig {
    pub fn new(measure: Measure) -> Self {
        Self {
            measure,
            granularity: Granularity::PerFeature,
            learning_rate: 1e-2,
            epochs: 100,
            mc_samples: 64,
            eval_rows: 256,
            seed: 0,
            stage1: TrainConfig::default(),
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            measure: self.measure,
            granularity: self.granularity,
            eval_rows: self.eval_rows,
            mc_samples: self.mc_samples,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            ..TrainConfig::default()
        }
        .validate()?;
        self.stage1.validate()
    }

    /// Reads `opt.*` keys over the given defaults.
    pub fn from_kv(kv: &KeyValues, measure: Measure, stage1: TrainConfig) -> Result<Self> {
        let d = Self::new(measure);
        let cfg = Self {
            measure,
            granularity: kv.parse_or("opt.granularity", d.granularity)?,
            learning_rate: kv.parse_or("opt.learning_rate", d.learning_rate)?,
            epochs: kv.parse_or("opt.epochs", d.epochs)?,
            mc_samples: kv.parse_or("opt.mc_samples", d.mc_samples)?,
            eval_rows: kv.parse_or("opt.eval_rows", d.eval_rows)?,
            seed: kv.parse_or("seed", d.seed)?,
            stage1,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
pub struct OptFit {
    /// Best stage-2 iterate.
    pub model: LinearLogisticModel,
    /// The stage-1 initializer ("trained without Z").
    pub stage1: LinearLogisticModel,
    /// Stage-2 objective at the initializer.
    pub initial_loss: f64,
    /// Stage-2 objective at the returned model.
    pub final_loss: f64,
    /// Objective before each ADAM step.
    pub history: Vec<f64>,
    /// False when stage 2 stopped after repeated loss increases.
    pub converged: bool,
}

/// Runs both stages against `reference`, a model trained on all columns.
pub fn opt_fit<R: Predictor + ?Sized>(data: &Dataset, reference: &R, cfg: &OptConfig) -> Result<OptFit> {
    cfg.validate()?;
    let x_cols = data.unprotected();
    let stage1 = train_logistic(data, &cfg.stage1, &x_cols)?;
    let problem = LossProblem::build(reference, data, &cfg.loss_config())?;
    Ok(descend(&problem, stage1, cfg))
}

fn descend(problem: &LossProblem, stage1: LinearLogisticModel, cfg: &OptConfig) -> OptFit {
    let mut model = stage1.clone();
    let mut params = model.packed_params();
    let stage2 = TrainConfig {
        learning_rate: cfg.learning_rate,
        ..cfg.stage1.clone()
    };
    let mut adam = Adam::from_config(params.len(), &stage2);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut best = (f64::INFINITY, params.clone());
    let mut increases = 0;
    let mut converged = true;

    for epoch in 0..=cfg.epochs {
        let (loss, grad) = problem.value_and_gradient(&model);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            converged = false;
            break;
        }
        if let Some(&prev) = history.last() {
            increases = if loss > prev { increases + 1 } else { 0 };
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, params.clone());
        }
        if increases >= MAX_INCREASES {
            converged = false;
            break;
        }
        if epoch == cfg.epochs {
            break;
        }
        adam.step(&mut params, &grad);
        model.set_packed_params(&params);
    }
    model.set_packed_params(&best.1);
    OptFit {
        model,
        stage1,
        initial_loss: history[0],
        final_loss: best.0,
        history,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sigmoid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let z = f64::from(u8::from(rng.random::<f64>() < 0.5));
            let a: f64 = rng.random_range(-1.0..1.0) + 0.8 * z;
            let b: f64 = rng.random_range(-1.0..1.0);
            let p = sigmoid(a + b + z);
            labels.push(u8::from(rng.random::<f64>() < p));
            rows.push(vec![a, b, z]);
        }
        Dataset::new(vec!["a".into(), "b".into(), "z".into()], rows, labels, vec![2]).unwrap()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let data = toy(80, 1);
        let reference = LinearLogisticModel::dense(vec![1.0, 0.8, 1.2], -0.2).unwrap();
        let cand = LinearLogisticModel::new(vec![0.6, -0.3, 0.0], 0.4, &[0, 1]).unwrap();
        for measure in [Measure::Shap, Measure::Mde] {
            for granularity in [Granularity::Pooled, Granularity::PerFeature] {
                let cfg = LossConfig {
                    measure,
                    granularity,
                    eval_rows: 30,
                    mc_samples: 16,
                    seed: 5,
                };
                let problem = LossProblem::build(&reference, &data, &cfg).unwrap();
                let (value, grad) = problem.value_and_gradient(&cand);
                assert!((value - problem.evaluate(&cand).value).abs() < 1e-12);
                let base = cand.packed_params();
                for k in 0..base.len() {
                    let h = 1e-6;
                    let mut plus = cand.clone();
                    let mut p = base.clone();
                    p[k] += h;
                    plus.set_packed_params(&p);
                    let mut minus = cand.clone();
                    p[k] -= 2.0 * h;
                    minus.set_packed_params(&p);
                    let fd = (problem.evaluate(&plus).value - problem.evaluate(&minus).value) / (2.0 * h);
                    assert!(
                        (fd - grad[k]).abs() < 1e-6 * (1.0 + fd.abs()),
                        "{measure:?}/{granularity:?} param {k}: fd {fd} vs {}",
                        grad[k]
                    );
                }
            }
        }
    }

    #[test]
    fn z_free_reference_leaves_stage_one_in_place() {
        let data = toy(400, 2);
        let cfg = OptConfig::new(Measure::Shap);
        let reference = train_logistic(&data, &cfg.stage1, &data.unprotected()).unwrap();
        let fit = opt_fit(&data, &reference, &cfg).unwrap();
        assert!(fit.initial_loss < 1e-20);
        for (a, b) in fit.model.weights().iter().zip(fit.stage1.weights()) {
            assert!((a - b).abs() < 1e-3);
        }
        assert!((fit.model.bias() - fit.stage1.bias()).abs() < 1e-3);
    }

    #[test]
    fn opt_fit_is_deterministic_and_never_worse() {
        let data = toy(300, 3);
        let reference = train_logistic(&data, &TrainConfig::default(), &[0, 1, 2]).unwrap();
        let mut cfg = OptConfig::new(Measure::Mde);
        cfg.seed = 11;
        let a = opt_fit(&data, &reference, &cfg).unwrap();
        let b = opt_fit(&data, &reference, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert!(a.final_loss <= a.initial_loss);
        assert_eq!(a.model.weights()[2], 0.0);
    }
}
