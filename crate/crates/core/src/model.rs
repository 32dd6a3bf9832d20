//! Linear-logistic classifier and its cross-entropy training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kv::{format_f64, format_f64_list, parse_list, KeyValues};
use crate::predictor::Predictor;

/// Logits are clamped into this range before the sigmoid. Above the upper
/// bound `σ` rounds to exactly 1.0 in `f64`; the lower bound keeps
/// `exp(logit)` a normal number.
pub const LOGIT_MAX: f64 = 36.0;
pub const LOGIT_MIN: f64 = -700.0;

pub fn clamp_logit(z: f64) -> f64 {
    z.clamp(LOGIT_MIN, LOGIT_MAX)
}

/// Numerically stable logistic function on a clamped logit.
pub fn sigmoid(z: f64) -> f64 {
    let z = clamp_logit(z);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Cross-entropy of a single label given the logit of its positive class.
fn logit_cross_entropy(z: f64, y: u8) -> f64 {
    let z = clamp_logit(z);
    if y == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLogisticModel {
    weights: Vec<f64>,
    bias: f64,
    active: Vec<bool>,
}

impl LinearLogisticModel {
    /// All-zero model over `dim` columns with every column active.
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            active: vec![true; dim],
        }
    }

    /// Builds a model; weights of inactive columns must be exactly zero.
    pub fn new(weights: Vec<f64>, bias: f64, mask: &[usize]) -> Result<Self> {
        let dim = weights.len();
        let active = mask_to_flags(dim, mask)?;
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("model parameters must be finite".into()));
        }
        if let Some(j) = (0..dim).find(|&j| !active[j] && weights[j] != 0.0) {
            return Err(Error::invalid(format!("inactive column {j} has nonzero weight")));
        }
        Ok(Self {
            weights,
            bias,
            active,
        })
    }

    /// Dense model with all columns active.
    pub fn dense(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let mask: Vec<usize> = (0..weights.len()).collect();
        Self::new(weights, bias, &mask)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&j| self.active[j]).collect()
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active[j]
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(row)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    /// `σ(wᵀx + b)`, never exactly 0 or 1.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        check_len(self.weights.len(), row)?;
        Ok(sigmoid(self.logit(row)))
    }

    /// 1 iff the probability reaches `threshold`; ties go to 1.
    pub fn predict_label(&self, row: &[f64], threshold: f64) -> Result<u8> {
        let p = self.predict_proba(row)?;
        label_at(p, threshold)
    }

    /// Parameters of the active columns followed by the bias.
    pub(crate) fn packed_params(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.active().iter().map(|&j| self.weights[j]).collect();
        p.push(self.bias);
        p
    }

    pub(crate) fn set_packed_params(&mut self, params: &[f64]) {
        let active = self.active();
        debug_assert_eq!(params.len(), active.len() + 1);
        for (k, &j) in active.iter().enumerate() {
            self.weights[j] = params[k];
        }
        self.bias = params[active.len()];
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("model", "linear_logistic");
        kv.set("n_features", self.weights.len().to_string());
        kv.set("weights", format_f64_list(&self.weights));
        kv.set("bias", format_f64(self.bias));
        kv.set(
            "active",
            self.active()
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let kind = kv.require("model")?;
        if kind != "linear_logistic" {
            return Err(Error::Config(format!("expected a linear_logistic model, got `{kind}`")));
        }
        let dim: usize = kv
            .parse_value("n_features")?
            .ok_or_else(|| Error::Config("missing key `n_features`".into()))?;
        let weights: Vec<f64> = kv
            .parse_list("weights")?
            .ok_or_else(|| Error::Config("missing key `weights`".into()))?;
        if weights.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: weights.len(),
            });
        }
        let bias: f64 = kv
            .parse_value("bias")?
            .ok_or_else(|| Error::Config("missing key `bias`".into()))?;
        let active: Vec<usize> = match kv.get("active") {
            Some(v) => parse_list(v).map_err(|_| Error::Config(format!("bad active list `{v}`")))?,
            None => (0..dim).collect(),
        };
        Self::new(weights, bias, &active)
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }
}

impl Predictor for LinearLogisticModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }
}

pub(crate) fn label_at(p: f64, threshold: f64) -> Result<u8> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold {threshold} not in (0, 1)")));
    }
    Ok(u8::from(p >= threshold))
}

fn check_len(dim: usize, row: &[f64]) -> Result<()> {
    if row.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: row.len(),
        });
    }
    Ok(())
}

fn mask_to_flags(dim: usize, mask: &[usize]) -> Result<Vec<bool>> {
    let mut flags = vec![false; dim];
    for &j in mask {
        if j >= dim {
            return Err(Error::invalid(format!("mask column {j} out of range for {dim} columns")));
        }
        flags[j] = true;
    }
    Ok(flags)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: None,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning rate {} not in (0, 1]",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("ADAM betas must lie in [0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::invalid("ADAM epsilon must be positive"));
        }
        Ok(())
    }

    /// Reads `learning_rate`, `epochs`, `batch_size`, `seed` and the ADAM keys,
    /// falling back to the defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            learning_rate: kv.parse_or("learning_rate", d.learning_rate)?,
            epochs: kv.parse_or("epochs", d.epochs)?,
            batch_size: kv.parse_value("batch_size")?,
            seed: kv.parse_or("seed", d.seed)?,
            adam_beta1: kv.parse_or("adam_beta1", d.adam_beta1)?,
            adam_beta2: kv.parse_or("adam_beta2", d.adam_beta2)?,
            adam_epsilon: kv.parse_or("adam_epsilon", d.adam_epsilon)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// ADAM state for a flat parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub(crate) fn from_config(n: usize, cfg: &TrainConfig) -> Self {
        Self::new(n, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Mean cross-entropy of `model` on `data`.
pub fn cross_entropy(model: &LinearLogisticModel, data: &Dataset) -> f64 {
    data.rows()
        .zip(data.labels())
        .map(|(row, &y)| logit_cross_entropy(model.logit(row), y))
        .sum::<f64>()
        / data.n_rows() as f64
}

/// Fits a logistic model on the columns in `mask` by ADAM on the mean
/// cross-entropy, starting from zero weights.
pub fn train_logistic(
    data: &Dataset,
    cfg: &TrainConfig,
    mask: &[usize],
) -> Result<LinearLogisticModel> {
    train_logistic_traced(data, cfg, mask).map(|(m, _)| m)
}

/// Like [`train_logistic`] but also returns the full-data loss after every epoch.
///
/// The returned model is the best iterate seen, so its loss never exceeds
/// that of the zero initializer.
pub fn train_logistic_traced(
    data: &Dataset,
    cfg: &TrainConfig,
    mask: &[usize],
) -> Result<(LinearLogisticModel, Vec<f64>)> {
    cfg.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if mask.is_empty() {
        return Err(Error::invalid("feature mask is empty"));
    }
    data.check_finite()?;
    let dim = data.n_cols();
    let active = mask_to_flags(dim, mask)?;
    let cols: Vec<usize> = (0..dim).filter(|&j| active[j]).collect();

    let mut model = LinearLogisticModel {
        weights: vec![0.0; dim],
        bias: 0.0,
        active,
    };
    let mut params = model.packed_params();
    let mut adam = Adam::from_config(params.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    let batch = cfg.batch_size.unwrap_or(data.n_rows()).min(data.n_rows());

    let mut best = (cross_entropy(&model, data), model.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; params.len()];

    for _ in 0..cfg.epochs {
        if batch < data.n_rows() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                let row = data.row(i);
                let resid = sigmoid(model.logit(row)) - f64::from(data.labels()[i]);
                for (k, &j) in cols.iter().enumerate() {
                    grad[k] += resid * row[j];
                }
                grad[cols.len()] += resid;
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad);
            model.set_packed_params(&params);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("training diverged to non-finite weights".into()));
        }
        let loss = cross_entropy(&model, data);
        if loss < best.0 {
            best = (loss, model.clone());
        }
        history.push(loss);
    }
    Ok((best.1, history))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub cross_entropy: f64,
}

/// Accuracy at `threshold` and mean cross-entropy of any probabilistic model.
pub fn evaluate<P: Predictor + ?Sized>(model: &P, data: &Dataset, threshold: f64) -> Result<Evaluation> {
    if data.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if model.n_features() != data.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: data.n_cols(),
        });
    }
    let mut correct = 0usize;
    let mut ce = 0.0;
    for (row, &y) in data.rows().zip(data.labels()) {
        let p = model.predict(row);
        if label_at(p, threshold)? == y {
            correct += 1;
        }
        let p = p.clamp(sigmoid(LOGIT_MIN), sigmoid(LOGIT_MAX));
        ce -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    let n = data.n_rows() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        cross_entropy: ce / n,
    })
}
