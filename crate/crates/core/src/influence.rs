//! Causal and input influence measures.
//!
//! Every expectation over a random baseline is taken over an empirical
//! reservoir built from a dataset:
//!
//! * the *joint* reservoir holds actual rows (the primed variables `W'`),
//! * the *marginal* reservoir holds the same columns with every column
//!   shuffled independently (the double-primed variables `W''`).
//!
//! Estimates either enumerate a reservoir exhaustively or draw from it with
//! replacement; see [`Sampling`]. Monte Carlo draws come from RNG streams
//! keyed by `(seed, row, feature)` so results never depend on scheduling.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::predictor::Predictor;

/// Largest player count accepted by exact subset enumeration.
pub const MAX_EXACT_FEATURES: usize = 20;

/// Default number of baseline draws per marginal-influence term.
pub const DEFAULT_BASELINE_DRAWS: usize = 128;

/// Default number of evaluation rows for global measures.
pub const DEFAULT_EVAL_ROWS: usize = 256;

/// How an expectation over a reservoir is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Visit every reservoir entry once, in order.
    Exhaustive,
    /// Draw `draws` entries uniformly with replacement.
    MonteCarlo { draws: usize, seed: u64 },
}

impl Sampling {
    /// Exhaustive when the pool is no larger than the budget, otherwise
    /// `budget` Monte Carlo draws.
    pub fn within_budget(budget: usize, pool: usize, seed: u64) -> Self {
        if pool <= budget {
            Sampling::Exhaustive
        } else {
            Sampling::MonteCarlo {
                draws: budget,
                seed,
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            Sampling::MonteCarlo { draws: 0, .. } => {
                Err(Error::invalid("Monte Carlo sampling needs at least one draw"))
            }
            _ => Ok(()),
        }
    }

    /// Indices into a pool of `pool` entries for the stream `(row, feature)`.
    pub(crate) fn indices(&self, pool: usize, row: u64, feature: u64) -> Vec<usize> {
        match *self {
            Sampling::Exhaustive => (0..pool).collect(),
            Sampling::MonteCarlo { draws, seed } => {
                let mut rng = keyed_rng(seed, row, feature);
                (0..draws).map(|_| rng.random_range(0..pool)).collect()
            }
        }
    }

    /// A copy with the seed replaced by one derived from `(row, feature)`.
    pub(crate) fn derive(&self, row: u64, feature: u64) -> Self {
        match *self {
            Sampling::Exhaustive => Sampling::Exhaustive,
            Sampling::MonteCarlo { draws, seed } => Sampling::MonteCarlo {
                draws,
                seed: keyed_rng(seed, row, feature).random(),
            },
        }
    }
}

/// Stream id used when an estimate is not tied to a particular feature.
pub(crate) const ALL_FEATURES: u64 = u64::MAX;

pub(crate) fn keyed_rng(seed: u64, row: u64, feature: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ feature.rotate_left(17));
    rng
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl InfluenceEstimate {
    /// Mean and `sd / √n` of the samples (sd with the `n − 1` denominator).
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                value: 0.0,
                stderr: 0.0,
                n_samples: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            value: mean,
            stderr,
            n_samples: n,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            n_samples: 1,
        }
    }
}

impl fmt::Display for InfluenceEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ± {:.6} (n={})", self.value, self.stderr, self.n_samples)
    }
}

/// Empirical joint and marginal reservoirs over full rows.
#[derive(Debug, Clone)]
pub struct BaselineSampler {
    dim: usize,
    protected: Vec<usize>,
    joint: Vec<f64>,
    marginal: Vec<f64>,
    seed: u64,
}

impl BaselineSampler {
    pub fn from_dataset(data: &Dataset, seed: u64) -> Self {
        Self::from_flat(data.n_cols(), data.protected().to_vec(), data.values().to_vec(), seed)
            .expect("dataset rows are well formed")
    }

    pub fn from_rows(rows: &[Vec<f64>], protected: Vec<usize>, seed: u64) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            flat.extend_from_slice(r);
        }
        Self::from_flat(dim, protected, flat, seed)
    }

    fn from_flat(dim: usize, protected: Vec<usize>, joint: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || joint.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if protected.iter().any(|&j| j >= dim) {
            return Err(Error::invalid("protected column out of range"));
        }
        let n = joint.len() / dim;
        let mut marginal = joint.clone();
        for j in 0..dim {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut keyed_rng(seed, ALL_FEATURES, j as u64));
            for (dst, &src) in perm.iter().enumerate() {
                marginal[dst * dim + j] = joint[src * dim + j];
            }
        }
        Ok(Self {
            dim,
            protected,
            joint,
            marginal,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.joint.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.joint.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn protected(&self) -> &[usize] {
        &self.protected
    }

    /// Row `k` of the joint reservoir, a realization of `W'`.
    pub fn joint_row(&self, k: usize) -> &[f64] {
        &self.joint[k * self.dim..(k + 1) * self.dim]
    }

    /// Row `k` of the independently shuffled reservoir, a realization of `W''`.
    pub fn marginal_row(&self, k: usize) -> &[f64] {
        &self.marginal[k * self.dim..(k + 1) * self.dim]
    }
}

/// Rows grouped by their protected values, realizing `P(X | z)`.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    dim: usize,
    protected: Vec<usize>,
    groups: HashMap<Vec<u64>, Vec<f64>>,
}

fn level_key(z: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same level
    z.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl ConditionalSampler {
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut groups: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
        for (i, row) in data.rows().enumerate() {
            groups
                .entry(level_key(&data.protected_values(i)))
                .or_default()
                .extend_from_slice(row);
        }
        Self {
            dim: data.n_cols(),
            protected: data.protected().to_vec(),
            groups,
        }
    }

    pub fn rows_for(&self, z: &[f64]) -> Result<&[f64]> {
        self.groups
            .get(&level_key(z))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLevel(z.to_vec()))
    }

    pub fn n_levels(&self) -> usize {
        self.groups.len()
    }
}

fn set_protected(row: &mut [f64], protected: &[usize], z: &[f64]) {
    for (&j, &v) in protected.iter().zip(z) {
        row[j] = v;
    }
}

fn check_model<P: Predictor + ?Sized>(model: &P, dim: usize) -> Result<()> {
    if model.n_features() != dim {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: dim,
        });
    }
    Ok(())
}

fn check_z(protected: &[usize], z: &[f64]) -> Result<()> {
    if z.len() != protected.len() {
        return Err(Error::DimensionMismatch {
            expected: protected.len(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Controlled direct effect `ŷ(x, z_to) − ŷ(x, z_from)`.
///
/// `x` holds the unprotected columns in column order; `protected` names the
/// columns `z_to` / `z_from` fill in.
pub fn cde<P: Predictor + ?Sized>(
    model: &P,
    protected: &[usize],
    x: &[f64],
    z_to: &[f64],
    z_from: &[f64],
) -> Result<f64> {
    let dim = model.n_features();
    check_z(protected, z_to)?;
    check_z(protected, z_from)?;
    if x.len() + protected.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim - protected.len().min(dim),
            got: x.len(),
        });
    }
    let mut row = vec![0.0; dim];
    let mut xs = x.iter();
    for (j, slot) in row.iter_mut().enumerate() {
        if !protected.contains(&j) {
            *slot = *xs.next().expect("length checked");
        }
    }
    set_protected(&mut row, protected, z_to);
    let hi = model.predict(&row);
    set_protected(&mut row, protected, z_from);
    Ok(hi - model.predict(&row))
}

/// Marginal direct effect: the CDE averaged over `X''` drawn from the
/// marginal reservoir.
pub fn mde<P: Predictor + ?Sized>(
    model: &P,
    z_to: &[f64],
    z_from: &[f64],
    baseline: &BaselineSampler,
    sampling: Sampling,
) -> Result<InfluenceEstimate> {
    check_model(model, baseline.dim())?;
    check_z(baseline.protected(), z_to)?;
    check_z(baseline.protected(), z_from)?;
    sampling.validate()?;
    let protected = baseline.protected();
    let mut row = vec![0.0; baseline.dim()];
    let samples: Vec<f64> = sampling
        .indices(baseline.len(), 0, ALL_FEATURES)
        .into_iter()
        .map(|k| {
            row.copy_from_slice(baseline.marginal_row(k));
            set_protected(&mut row, protected, z_to);
            let hi = model.predict(&row);
            set_protected(&mut row, protected, z_from);
            hi - model.predict(&row)
        })
        .collect();
    Ok(InfluenceEstimate::from_samples(&samples))
}

/// Natural direct effect with the mediators drawn from `P(X | z_ref_mediator)`.
pub fn nde<P: Predictor + ?Sized>(
    model: &P,
    z_to: &[f64],
    z_from: &[f64],
    cond: &ConditionalSampler,
    z_ref_mediator: &[f64],
    sampling: Sampling,
) -> Result<InfluenceEstimate> {
    check_model(model, cond.dim)?;
    check_z(&cond.protected, z_to)?;
    check_z(&cond.protected, z_from)?;
    sampling.validate()?;
    let rows = cond.rows_for(z_ref_mediator)?;
    let n = rows.len() / cond.dim;
    let mut row = vec![0.0; cond.dim];
    let samples: Vec<f64> = sampling
        .indices(n, 0, ALL_FEATURES)
        .into_iter()
        .map(|k| {
            row.copy_from_slice(&rows[k * cond.dim..(k + 1) * cond.dim]);
            set_protected(&mut row, &cond.protected, z_to);
            let hi = model.predict(&row);
            set_protected(&mut row, &cond.protected, z_from);
            hi - model.predict(&row)
        })
        .collect();
    Ok(InfluenceEstimate::from_samples(&samples))
}

/// Marginal influence of feature `i` on top of the kept set `kept`, with the
/// remaining features taken from joint baseline rows.
pub fn marginal_influence<P: Predictor + ?Sized>(
    model: &P,
    w: &[f64],
    i: usize,
    kept: &[usize],
    baseline: &BaselineSampler,
    sampling: Sampling,
) -> Result<InfluenceEstimate> {
    let dim = baseline.dim();
    check_model(model, dim)?;
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    if i >= dim || kept.iter().any(|&j| j >= dim) {
        return Err(Error::invalid("feature index out of range"));
    }
    if kept.contains(&i) {
        return Err(Error::invalid(format!("feature {i} is already in the kept set")));
    }
    sampling.validate()?;
    let mut with_i = vec![0.0; dim];
    let mut without_i = vec![0.0; dim];
    let samples: Vec<f64> = sampling
        .indices(baseline.len(), 0, i as u64)
        .into_iter()
        .map(|k| {
            with_i.copy_from_slice(baseline.joint_row(k));
            for &j in kept {
                with_i[j] = w[j];
            }
            without_i.copy_from_slice(&with_i);
            with_i[i] = w[i];
            model.predict(&with_i) - model.predict(&without_i)
        })
        .collect();
    Ok(InfluenceEstimate::from_samples(&samples))
}

/// Shapley weights `s! (g − s − 1)! / g!` for coalition sizes `s = 0..g`.
pub(crate) fn shapley_weights(players: usize) -> Vec<f64> {
    let g = players as f64;
    let mut out = Vec::with_capacity(players);
    // w(0) = 1/g; w(s+1) = w(s) · (s+1) / (g−s−1)
    let mut w = 1.0 / g;
    for s in 0..players {
        out.push(w);
        if s + 1 < players {
            w *= (s + 1) as f64 / (g - s as f64 - 1.0);
        }
    }
    out
}

/// Exact Shapley values of the game `v(S) = f(w_S b_{−S})` for one baseline
/// row `b`, over players that are groups of columns.
pub(crate) struct ShapleyGame<'a> {
    groups: &'a [Vec<usize>],
    weights: Vec<f64>,
    values: Vec<f64>,
    point: Vec<f64>,
}

impl<'a> ShapleyGame<'a> {
    pub(crate) fn new(groups: &'a [Vec<usize>], dim: usize) -> Self {
        Self {
            groups,
            weights: shapley_weights(groups.len()),
            values: vec![0.0; 1 << groups.len()],
            point: vec![0.0; dim],
        }
    }

    /// Writes the point for coalition `mask` into `out`.
    pub(crate) fn fill_point(groups: &[Vec<usize>], w: &[f64], base: &[f64], mask: usize, out: &mut [f64]) {
        out.copy_from_slice(base);
        for (p, cols) in groups.iter().enumerate() {
            if mask & (1 << p) != 0 {
                for &j in cols {
                    out[j] = w[j];
                }
            }
        }
    }

    /// Coefficient of `v(mask)` in the Shapley value of player `p`.
    pub(crate) fn coefficient(weights: &[f64], p: usize, mask: usize) -> f64 {
        let size = mask.count_ones() as usize;
        if mask & (1 << p) != 0 {
            weights[size - 1]
        } else {
            -weights[size]
        }
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Shapley values of every player for the baseline row `base`.
    pub(crate) fn solve<P: Predictor + ?Sized>(&mut self, model: &P, w: &[f64], base: &[f64], out: &mut [f64]) {
        let n_masks = self.values.len();
        for mask in 0..n_masks {
            Self::fill_point(self.groups, w, base, mask, &mut self.point);
            self.values[mask] = model.predict(&self.point);
        }
        for (p, phi) in out.iter_mut().enumerate().take(self.groups.len()) {
            let bit = 1 << p;
            let mut acc = 0.0;
            for mask in 0..n_masks {
                if mask & bit == 0 {
                    let s = mask.count_ones() as usize;
                    acc += self.weights[s] * (self.values[mask | bit] - self.values[mask]);
                }
            }
            *phi = acc;
        }
    }
}

pub(crate) fn singleton_groups(dim: usize) -> Vec<Vec<usize>> {
    (0..dim).map(|j| vec![j]).collect()
}

/// Exact Shapley values for all players at row `w`, averaged over baseline
/// rows. The same baseline draws are used for every player, so the values
/// sum to `f(w) − mean f(W')` draw by draw.
pub(crate) fn shapley_all<P: Predictor + ?Sized>(
    model: &P,
    w: &[f64],
    groups: &[Vec<usize>],
    baseline: &BaselineSampler,
    sampling: Sampling,
    row_key: u64,
) -> Vec<InfluenceEstimate> {
    let g = groups.len();
    let mut game = ShapleyGame::new(groups, baseline.dim());
    let draws = sampling.indices(baseline.len(), row_key, ALL_FEATURES);
    let mut per_player = vec![Vec::with_capacity(draws.len()); g];
    let mut phi = vec![0.0; g];
    for k in draws {
        game.solve(model, w, baseline.joint_row(k), &mut phi);
        for (acc, &v) in per_player.iter_mut().zip(&phi) {
            acc.push(v);
        }
    }
    per_player
        .iter()
        .map(|s| InfluenceEstimate::from_samples(s))
        .collect()
}

fn check_shap_inputs<P: Predictor + ?Sized>(
    model: &P,
    w: &[f64],
    i: usize,
    baseline: &BaselineSampler,
) -> Result<()> {
    let dim = baseline.dim();
    check_model(model, dim)?;
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: w.len(),
        });
    }
    if i >= dim {
        return Err(Error::invalid(format!("feature {i} out of range")));
    }
    Ok(())
}

/// SHAP of feature `i` at row `w` by enumerating every subset of the other
/// features.
pub fn shap_exact<P: Predictor + ?Sized>(
    model: &P,
    w: &[f64],
    i: usize,
    baseline: &BaselineSampler,
    sampling: Sampling,
) -> Result<InfluenceEstimate> {
    check_shap_inputs(model, w, i, baseline)?;
    Ok(shap_exact_all(model, w, baseline, sampling)?[i])
}

/// SHAP of every feature at row `w`.
pub fn shap_exact_all<P: Predictor + ?Sized>(
    model: &P,
    w: &[f64],
    baseline: &BaselineSampler,
    sampling: Sampling,
) -> Result<Vec<InfluenceEstimate>> {
    check_shap_inputs(model, w, 0, baseline)?;
    let dim = baseline.dim();
    if dim > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            features: dim,
            max: MAX_EXACT_FEATURES,
        });
    }
    sampling.validate()?;
    Ok(shapley_all(model, w, &singleton_groups(dim), baseline, sampling, 0))
}

/// Permutation-sampling estimate of SHAP for feature `i`: each sample draws
/// a feature ordering and a joint baseline row.
pub fn shap_sampled<P: Predictor + ?Sized>(
    model: &P,
    w: &[f64],
    i: usize,
    baseline: &BaselineSampler,
    n_permutations: usize,
    seed: u64,
) -> Result<InfluenceEstimate> {
    check_shap_inputs(model, w, i, baseline)?;
    if n_permutations == 0 {
        return Err(Error::invalid("need at least one permutation"));
    }
    let dim = baseline.dim();
    let mut rng = keyed_rng(seed, 0, i as u64);
    let mut order: Vec<usize> = (0..dim).collect();
    let mut without_i = vec![0.0; dim];
    let mut samples = Vec::with_capacity(n_permutations);
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        let k = rng.random_range(0..baseline.len());
        without_i.copy_from_slice(baseline.joint_row(k));
        for &j in order.iter().take_while(|&&j| j != i) {
            without_i[j] = w[j];
        }
        let lo = model.predict(&without_i);
        without_i[i] = w[i];
        samples.push(model.predict(&without_i) - lo);
    }
    Ok(InfluenceEstimate::from_samples(&samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Shap,
    Mde,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Shap => "shap",
            Measure::Mde => "mde",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shap" => Ok(Measure::Shap),
            "mde" => Ok(Measure::Mde),
            other => Err(Error::invalid(format!("unknown measure `{other}`"))),
        }
    }
}

/// Sampling budget for a global influence measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalConfig {
    /// Evaluation rows for SHAP.
    pub eval: Sampling,
    /// Evaluation pairs `(x_j, x_j'')` for MDE. Exhaustive means all `n²`.
    pub pairs: Sampling,
    /// Baseline draws per evaluation.
    pub baseline: Sampling,
    /// Seed of the reservoir shuffles.
    pub reservoir_seed: u64,
}

impl GlobalConfig {
    /// Monte Carlo defaults, or exhaustive enumeration where the data is
    /// smaller than the default budget.
    pub fn for_data(data: &Dataset, seed: u64) -> Self {
        let n = data.n_rows();
        Self {
            eval: Sampling::within_budget(DEFAULT_EVAL_ROWS, n, seed),
            pairs: Sampling::within_budget(DEFAULT_EVAL_ROWS, n.saturating_mul(n), seed),
            baseline: Sampling::within_budget(DEFAULT_BASELINE_DRAWS, n, seed ^ 0x5eed),
            reservoir_seed: seed,
        }
    }
}

/// Mean absolute influence of every feature over evaluation rows of `data`,
/// on the model's outputs (probabilities for classifiers).
///
/// SHAP: `E_W |SHAP(w_j | W)|` with joint baseline rows.
/// MDE: `E_{X_j, X_j''} |MDE(X_j, X_j'')|`, the rest of the row drawn from the
/// marginal reservoir.
pub fn global_influence_all<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    measure: Measure,
    cfg: &GlobalConfig,
) -> Result<Vec<InfluenceEstimate>> {
    check_model(model, data.n_cols())?;
    cfg.eval.validate()?;
    cfg.pairs.validate()?;
    cfg.baseline.validate()?;
    let baseline = BaselineSampler::from_dataset(data, cfg.reservoir_seed);
    match measure {
        Measure::Shap => global_shap(model, data, &baseline, cfg),
        Measure::Mde => Ok((0..data.n_cols())
            .map(|j| global_mde_feature(model, data, &baseline, cfg, j))
            .collect()),
    }
}

/// [`global_influence_all`] for a single feature.
pub fn global_influence<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    feature: usize,
    measure: Measure,
    cfg: &GlobalConfig,
) -> Result<InfluenceEstimate> {
    if feature >= data.n_cols() {
        return Err(Error::invalid(format!("feature {feature} out of range")));
    }
    check_model(model, data.n_cols())?;
    cfg.eval.validate()?;
    cfg.pairs.validate()?;
    cfg.baseline.validate()?;
    let baseline = BaselineSampler::from_dataset(data, cfg.reservoir_seed);
    match measure {
        Measure::Shap => Ok(global_shap(model, data, &baseline, cfg)?.swap_remove(feature)),
        Measure::Mde => Ok(global_mde_feature(model, data, &baseline, cfg, feature)),
    }
}

fn global_shap<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    baseline: &BaselineSampler,
    cfg: &GlobalConfig,
) -> Result<Vec<InfluenceEstimate>> {
    let dim = data.n_cols();
    if dim > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            features: dim,
            max: MAX_EXACT_FEATURES,
        });
    }
    let groups = singleton_groups(dim);
    let rows = cfg.eval.indices(data.n_rows(), ALL_FEATURES, ALL_FEATURES);
    let mut per_feature = vec![Vec::with_capacity(rows.len()); dim];
    for (pos, &r) in rows.iter().enumerate() {
        let draws = cfg.baseline.derive(pos as u64, ALL_FEATURES);
        let phis = shapley_all(model, data.row(r), &groups, baseline, draws, pos as u64);
        for (acc, phi) in per_feature.iter_mut().zip(phis) {
            acc.push(phi.value.abs());
        }
    }
    Ok(per_feature
        .iter()
        .map(|s| InfluenceEstimate::from_samples(s))
        .collect())
}

fn global_mde_feature<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    baseline: &BaselineSampler,
    cfg: &GlobalConfig,
    j: usize,
) -> InfluenceEstimate {
    let n = data.n_rows();
    // (evaluation row, row supplying x_j'')
    let pairs: Vec<(usize, usize)> = match cfg.pairs {
        Sampling::Exhaustive => (0..n).flat_map(|r| (0..baseline.len()).map(move |k| (r, k))).collect(),
        Sampling::MonteCarlo { draws, seed } => {
            let mut rng = keyed_rng(seed, ALL_FEATURES, j as u64);
            (0..draws)
                .map(|_| (rng.random_range(0..n), rng.random_range(0..baseline.len())))
                .collect()
        }
    };
    let mut point = vec![0.0; data.n_cols()];
    let samples: Vec<f64> = pairs
        .iter()
        .enumerate()
        .map(|(pos, &(r, k))| {
            let x_j = data.row(r)[j];
            let x_j_alt = baseline.marginal_row(k)[j];
            let inner = cfg.baseline.indices(baseline.len(), pos as u64, j as u64);
            let m = inner.len() as f64;
            let total: f64 = inner
                .into_iter()
                .map(|b| {
                    point.copy_from_slice(baseline.marginal_row(b));
                    point[j] = x_j;
                    let hi = model.predict(&point);
                    point[j] = x_j_alt;
                    hi - model.predict(&point)
                })
                .sum();
            (total / m).abs()
        })
        .collect();
    InfluenceEstimate::from_samples(&samples)
}

/// One line of an influence report.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceRow {
    pub method: String,
    pub feature: String,
    pub measure: Measure,
    pub estimate: InfluenceEstimate,
}

/// Writes `method,feature,measure,value,stderr,n_samples`.
pub fn write_influence_csv<W: Write>(out: W, rows: &[InfluenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "feature", "measure", "value", "stderr", "n_samples"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.feature.clone(),
            r.measure.name().to_string(),
            r.estimate.value.to_string(),
            r.estimate.stderr.to_string(),
            r.estimate.n_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_influence_csv(path: impl AsRef<Path>, rows: &[InfluenceRow]) -> Result<()> {
    write_influence_csv(std::fs::File::create(path)?, rows)
}
