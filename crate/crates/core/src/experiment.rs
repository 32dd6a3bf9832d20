//! Repeated-trial sweeps over the latent correlation `r`, bootstrap
//! intervals, and single-model audits.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::debias::mixture::{mim, MixtureModel};
use crate::debias::opt::{opt_fit, OptConfig};
use crate::error::{Error, Result};
use crate::fairness::{metric, FairnessReport, GroupedOutcomes, METRICS};
use crate::influence::{
    global_influence_all, save_influence_csv, GlobalConfig, InfluenceRow, Measure, Sampling,
    DEFAULT_BASELINE_DRAWS, DEFAULT_EVAL_ROWS,
};
use crate::kv::KeyValues;
use crate::model::{label_at, train_logistic, LinearLogisticModel, TrainConfig};
use crate::predictor::Predictor;
use crate::synth::{load_dataset_csv, make_scenario, pearson, train_test_split, Scenario, ScenarioConfig, Schema};

pub const DEFAULT_TRIALS: usize = 30;
pub const DEFAULT_N_PER_TRIAL: usize = 10_000;
pub const TEST_FRACTION: f64 = 0.2;
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    TradFull,
    TradWoZ,
    Mim,
    OptMde,
    OptShap,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::TradFull, Method::TradWoZ, Method::Mim, Method::OptMde, Method::OptShap];

    pub fn name(self) -> &'static str {
        match self {
            Method::TradFull => "trad_full",
            Method::TradWoZ => "trad_wo_z",
            Method::Mim => "mim",
            Method::OptMde => "opt_mde",
            Method::OptShap => "opt_shap",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// A model produced by one of the methods.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Linear(LinearLogisticModel),
    Mixture(MixtureModel<LinearLogisticModel>),
}

impl Predictor for FittedModel {
    fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.n_features(),
            FittedModel::Mixture(m) => m.n_features(),
        }
    }

    fn predict(&self, row: &[f64]) -> f64 {
        match self {
            FittedModel::Linear(m) => m.predict(row),
            FittedModel::Mixture(m) => m.predict(row),
        }
    }
}

impl FittedModel {
    pub fn to_kv(&self) -> KeyValues {
        match self {
            FittedModel::Linear(m) => m.to_kv(),
            FittedModel::Mixture(m) => m.to_kv(),
        }
    }

    /// Dispatches on the `model` key.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        match kv.require("model")? {
            "linear_logistic" => Ok(FittedModel::Linear(LinearLogisticModel::from_kv(kv)?)),
            "linear_logistic_mixture" => Ok(FittedModel::Mixture(MixtureModel::from_kv(kv)?)),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_kv().to_text())?;
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FittedModel::Linear(_) => "linear_logistic",
            FittedModel::Mixture(_) => "linear_logistic_mixture",
        }
    }
}

/// Training settings shared by every method of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub train: TrainConfig,
    pub opt_learning_rate: f64,
    pub opt_epochs: usize,
    pub opt_mc_samples: usize,
    pub opt_eval_rows: usize,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                learning_rate: 0.1,
                epochs: 300,
                ..TrainConfig::default()
            },
            opt_learning_rate: 1e-2,
            opt_epochs: 100,
            opt_mc_samples: 64,
            opt_eval_rows: 256,
        }
    }
}

impl MethodConfig {
    fn opt(&self, measure: Measure, seed: u64) -> OptConfig {
        OptConfig {
            learning_rate: self.opt_learning_rate,
            epochs: self.opt_epochs,
            mc_samples: self.opt_mc_samples,
            eval_rows: self.opt_eval_rows,
            seed,
            stage1: self.train.clone(),
            ..OptConfig::new(measure)
        }
    }
}

/// Fits every requested method on `train`. The full model is trained once
/// and shared by the methods derived from it.
pub fn fit_methods(
    train: &Dataset,
    methods: &[Method],
    cfg: &MethodConfig,
    seed: u64,
) -> Result<Vec<(Method, FittedModel)>> {
    let all: Vec<usize> = (0..train.n_cols()).collect();
    let needs_full = methods.iter().any(|m| *m != Method::TradWoZ);
    let full = if needs_full {
        Some(train_logistic(train, &cfg.train, &all)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let model = match method {
            Method::TradFull => FittedModel::Linear(full.clone().expect("trained")),
            Method::TradWoZ => FittedModel::Linear(train_logistic(train, &cfg.train, &train.unprotected())?),
            Method::Mim => FittedModel::Mixture(mim(full.clone().expect("trained"), train)?),
            Method::OptMde | Method::OptShap => {
                let measure = if method == Method::OptMde { Measure::Mde } else { Measure::Shap };
                let reference = full.as_ref().expect("trained");
                FittedModel::Linear(opt_fit(train, reference, &cfg.opt(measure, seed))?.model)
            }
        };
        out.push((method, model));
    }
    Ok(out)
}

/// Budget of the global influence estimates in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceBudget {
    pub eval_rows: usize,
    pub baseline_draws: usize,
}

impl Default for InfluenceBudget {
    fn default() -> Self {
        Self {
            eval_rows: DEFAULT_EVAL_ROWS,
            baseline_draws: DEFAULT_BASELINE_DRAWS,
        }
    }
}

impl InfluenceBudget {
    pub fn global_config(&self, data: &Dataset, seed: u64) -> GlobalConfig {
        let n = data.n_rows();
        GlobalConfig {
            eval: Sampling::within_budget(self.eval_rows, n, seed),
            pairs: Sampling::within_budget(self.eval_rows, n.saturating_mul(n), seed),
            baseline: Sampling::within_budget(self.baseline_draws, n, seed ^ 0x5eed),
            reservoir_seed: seed,
        }
    }
}

/// One measured quantity of one method in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub metric: String,
    pub feature: String,
    /// `None` when undefined (an empty stratum).
    pub value: Option<f64>,
    /// Monte Carlo standard error, for influence measures.
    pub stderr: Option<f64>,
}

/// Influence, accuracy and fairness of `model` on `test`.
pub fn measure_model<P: Predictor + ?Sized>(
    model: &P,
    test: &Dataset,
    budget: &InfluenceBudget,
    seed: u64,
) -> Result<Vec<Measurement>> {
    let gcfg = budget.global_config(test, seed);
    let mut out = Vec::new();
    for measure in [Measure::Shap, Measure::Mde] {
        let est = global_influence_all(model, test, measure, &gcfg)?;
        for (name, e) in test.names().iter().zip(est) {
            if !e.value.is_finite() {
                return Err(Error::Numeric(format!("{} of {name} is not finite", measure.name())));
            }
            out.push(Measurement {
                metric: format!("{}_{name}", measure.name()),
                feature: name.clone(),
                value: Some(e.value),
                stderr: Some(e.stderr),
            });
        }
    }
    let g = grouped_outcomes(model, test)?;
    for m in METRICS {
        out.push(Measurement {
            metric: m.to_string(),
            feature: String::new(),
            value: metric(&g, m).ok(),
            stderr: None,
        });
    }
    Ok(out)
}

/// Predicted labels at the 0.5 threshold grouped by the first protected column.
pub fn grouped_outcomes<P: Predictor + ?Sized>(model: &P, data: &Dataset) -> Result<GroupedOutcomes> {
    let z_col = *data
        .protected()
        .first()
        .ok_or_else(|| Error::invalid("dataset has no protected column"))?;
    let mut predicted = Vec::with_capacity(data.n_rows());
    for row in data.rows() {
        let p = model.predict(row);
        if !p.is_finite() {
            return Err(Error::Numeric("model output is not finite".into()));
        }
        predicted.push(label_at(p, DECISION_THRESHOLD)?);
    }
    GroupedOutcomes::from_predictions(data.labels(), &predicted, &data.column(z_col))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: Scenario,
    pub r_grid: Vec<f64>,
    pub trials: usize,
    pub n_per_trial: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub fit: MethodConfig,
    pub budget: InfluenceBudget,
    pub bootstrap_resamples: usize,
}

impl SweepSpec {
    pub fn new(scenario: Scenario, r_grid: Vec<f64>) -> Self {
        Self {
            scenario,
            r_grid,
            trials: DEFAULT_TRIALS,
            n_per_trial: DEFAULT_N_PER_TRIAL,
            methods: Method::ALL.to_vec(),
            seed: 0,
            fit: MethodConfig::default(),
            budget: InfluenceBudget::default(),
            bootstrap_resamples: 10_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.r_grid.is_empty() {
            return Err(Error::Config("r grid is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::Config("bootstrap resamples must be positive".into()));
        }
        for &r in &self.r_grid {
            ScenarioConfig::new(self.scenario, r, self.n_per_trial, 0).validate()?;
        }
        self.fit.train.validate()
    }

    /// Reads `scenario`, `r_grid`, `trials`, `n_per_trial`, `methods`, `seed`,
    /// the training keys, `opt.*`, `influence.*` and `bootstrap_resamples`.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let scenario: Scenario = kv.require("scenario")?.parse()?;
        let r_grid = kv.parse_list("r_grid")?.unwrap_or_else(|| vec![0.0, 0.2, 0.4, 0.6, 0.8]);
        let mut spec = Self::new(scenario, r_grid);
        spec.trials = kv.parse_or("trials", spec.trials)?;
        spec.n_per_trial = kv.parse_or("n_per_trial", spec.n_per_trial)?;
        if let Some(methods) = kv.get("methods") {
            spec.methods = methods.split(',').map(str::parse).collect::<Result<_>>()?;
        }
        spec.seed = kv.parse_or("seed", spec.seed)?;
        let d = MethodConfig::default();
        spec.fit.train = TrainConfig {
            learning_rate: kv.parse_or("learning_rate", d.train.learning_rate)?,
            epochs: kv.parse_or("epochs", d.train.epochs)?,
            batch_size: kv.parse_value("batch_size")?,
            seed: spec.seed,
            ..d.train
        };
        spec.fit.opt_learning_rate = kv.parse_or("opt.learning_rate", d.opt_learning_rate)?;
        spec.fit.opt_epochs = kv.parse_or("opt.epochs", d.opt_epochs)?;
        spec.fit.opt_mc_samples = kv.parse_or("opt.mc_samples", d.opt_mc_samples)?;
        spec.fit.opt_eval_rows = kv.parse_or("opt.eval_rows", d.opt_eval_rows)?;
        spec.budget.eval_rows = kv.parse_or("influence.eval_rows", spec.budget.eval_rows)?;
        spec.budget.baseline_draws = kv.parse_or("influence.baseline_draws", spec.budget.baseline_draws)?;
        spec.bootstrap_resamples = kv.parse_or("bootstrap_resamples", spec.bootstrap_resamples)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Seed of trial `trial`. Every grid point reuses it, so comparisons
    /// across `r` see common random numbers.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng.random()
    }
}

/// One method's measurements in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub r: f64,
    pub trial: usize,
    pub method: String,
    pub measurement: Measurement,
}

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub r: f64,
    pub method: String,
    pub metric: String,
    pub feature: String,
    pub mean: Option<f64>,
    pub ci: Option<(f64, f64)>,
    /// Trials in which the metric was defined.
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    /// Per-trial values of one (r, method, metric), in trial order.
    pub fn values(&self, r: f64, method: &str, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|t| t.r == r && t.method == method && t.measurement.metric == metric)
            .filter_map(|t| t.measurement.value)
            .collect()
    }

    pub fn summary_row(&self, r: f64, method: &str, metric: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.r == r && s.method == method && s.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "r", "method", "metric", "feature", "mean", "ci_low", "ci_high", "trials"])?;
        let cell = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |v| v.to_string());
        for s in &self.summary {
            w.write_record([
                s.scenario.to_string(),
                s.r.to_string(),
                s.method.clone(),
                s.metric.clone(),
                s.feature.clone(),
                cell(s.mean),
                cell(s.ci.map(|c| c.0)),
                cell(s.ci.map(|c| c.1)),
                s.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn run_trial(spec: &SweepSpec, r_index: usize, trial: usize) -> Result<Vec<TrialRecord>> {
    let r = spec.r_grid[r_index];
    let seed = spec.trial_seed(trial);
    let data = make_scenario(&ScenarioConfig::new(spec.scenario, r, spec.n_per_trial, seed))?;
    let (train, test) = train_test_split(&data, TEST_FRACTION, seed)?;
    let record = |method: &str, measurement: Measurement| TrialRecord {
        r,
        trial,
        method: method.to_string(),
        measurement,
    };
    let z = data.protected()[0];
    let mut out = vec![record(
        "data",
        Measurement {
            metric: "point_biserial".into(),
            feature: data.names()[0].clone(),
            value: pearson(&data.column(0), &data.column(z)).ok(),
            stderr: None,
        },
    )];
    for (method, model) in fit_methods(&train, &spec.methods, &spec.fit, seed)? {
        for m in measure_model(&model, &test, &spec.budget, seed)? {
            out.push(record(method.name(), m));
        }
    }
    Ok(out)
}

/// Runs every (r, trial) in parallel and aggregates per (r, method, metric).
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.r_grid.len())
        .flat_map(|i| (0..spec.trials).map(move |t| (i, t)))
        .collect();
    let per_job: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&(i, t)| run_trial(spec, i, t))
        .collect::<Result<_>>()?;
    let mut records: Vec<TrialRecord> = per_job.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        a.r.total_cmp(&b.r)
            .then_with(|| a.method.cmp(&b.method))
            .then_with(|| a.measurement.metric.cmp(&b.measurement.metric))
            .then_with(|| a.trial.cmp(&b.trial))
    });

    let mut groups: BTreeMap<(u64, String, String), (f64, String, Vec<f64>)> = BTreeMap::new();
    for t in &records {
        // order-preserving key for nonnegative r
        let key = ((t.r + 0.0).to_bits(), t.method.clone(), t.measurement.metric.clone());
        let entry = groups
            .entry(key)
            .or_insert_with(|| (t.r, t.measurement.feature.clone(), Vec::new()));
        if let Some(v) = t.measurement.value {
            entry.2.push(v);
        }
    }
    let mut summary = Vec::with_capacity(groups.len());
    for (k, ((_, method, metric), (r, feature, values))) in groups.into_iter().enumerate() {
        let mean = (!values.is_empty()).then(|| mean(&values));
        let ci = if values.len() >= 2 {
            Some(bootstrap_ci(&values, 0.95, spec.bootstrap_resamples, spec.seed ^ k as u64)?)
        } else {
            mean.map(|m| (m, m))
        };
        summary.push(SummaryRow {
            scenario: spec.scenario,
            r,
            method,
            metric,
            feature,
            mean,
            ci,
            trials: values.len(),
        });
    }
    Ok(SweepResult { records, summary })
}

/// Mean computed as an offset from the first value, so constant inputs
/// return that constant exactly.
fn mean(values: &[f64]) -> f64 {
    let v0 = values[0];
    v0 + values.iter().map(|v| v - v0).sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(values: &[f64], level: f64, resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::invalid("bootstrap needs at least two values"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level {level} is outside (0, 1)")));
    }
    if resamples == 0 {
        return Err(Error::invalid("bootstrap needs at least one resample"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("bootstrap over non-finite values".into()));
    }
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n];
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..n)];
            }
            mean(&buf)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// Influence and fairness of a saved model on a CSV dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub influence: Vec<InfluenceRow>,
    pub fairness: FairnessReport,
}

/// Global SHAP and MDE of every feature plus the fairness metrics.
pub fn audit<P: Predictor + ?Sized>(method: &str, model: &P, data: &Dataset, seed: u64) -> Result<AuditReport> {
    if model.n_features() != data.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: data.n_cols(),
            got: model.n_features(),
        });
    }
    let gcfg = GlobalConfig::for_data(data, seed);
    let mut influence = Vec::new();
    for measure in [Measure::Shap, Measure::Mde] {
        for (name, estimate) in data.names().iter().zip(global_influence_all(model, data, measure, &gcfg)?) {
            influence.push(InfluenceRow {
                method: method.to_string(),
                feature: name.clone(),
                measure,
                estimate,
            });
        }
    }
    let fairness = FairnessReport::new(method, &grouped_outcomes(model, data)?);
    Ok(AuditReport { influence, fairness })
}

/// Loads the model, schema and data, and writes `influence.csv` and
/// `fairness.csv` into `out_dir`.
pub fn run_audit(
    model_path: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<AuditReport> {
    let schema = Schema::load(schema_path)?;
    let model = FittedModel::load(model_path)?;
    let data = load_dataset_csv(data_path, &schema)?;
    let report = audit(model.kind(), &model, &data, seed)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    save_influence_csv(out_dir.join("influence.csv"), &report.influence)?;
    report.fairness.save_csv(out_dir.join("fairness.csv"))?;
    Ok(report)
}
