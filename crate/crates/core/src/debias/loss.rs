//! Influence-preservation losses.
//!
//! A loss compares, row by row, the influence the reference model assigns to
//! the unprotected features with the influence a `Z`-free candidate assigns
//! to them, under squared error. With the random baseline draws fixed, each
//! candidate influence is a fixed linear combination of candidate outputs at
//! fixed points. [`LossProblem`] stores those points and coefficients so the
//! loss and its gradient can be re-evaluated cheaply for new candidates.

use rand::Rng;

use crate::dataset::Dataset;
use crate::debias::mixture::empirical_levels;
use crate::error::{Error, Result};
use crate::influence::{keyed_rng, singleton_groups, BaselineSampler, InfluenceEstimate, Measure, Sampling, ShapleyGame, ALL_FEATURES};
use crate::model::{sigmoid, LinearLogisticModel};
use crate::predictor::Predictor;

/// Protected levels beyond this count are subsampled for the inner `Z`
/// expectation.
const MAX_EXACT_LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// All unprotected features intervened on jointly.
    Pooled,
    /// One loss term per unprotected feature, summed.
    PerFeature,
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Granularity::Pooled),
            "per_feature" => Ok(Granularity::PerFeature),
            other => Err(Error::invalid(format!("unknown granularity `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub measure: Measure,
    pub granularity: Granularity,
    /// Rows the outer expectation runs over; all rows when the data is smaller.
    pub eval_rows: usize,
    /// Baseline draws per inner expectation; exhaustive when the data is smaller.
    pub mc_samples: usize,
    pub seed: u64,
}

impl LossConfig {
    pub fn new(measure: Measure, granularity: Granularity) -> Self {
        Self {
            measure,
            granularity,
            eval_rows: crate::influence::DEFAULT_EVAL_ROWS,
            mc_samples: crate::influence::DEFAULT_BASELINE_DRAWS,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone)]
struct Term {
    row: usize,
    target: f64,
    coefs: Vec<(u32, f64)>,
}

/// The loss with every random draw frozen.
#[derive(Debug, Clone)]
pub struct LossProblem {
    dim: usize,
    points: Vec<f64>,
    terms: Vec<Term>,
    n_rows: usize,
}

impl LossProblem {
    /// Samples the evaluation rows and baseline draws and computes the
    /// reference influences once.
    pub fn build<R: Predictor + ?Sized>(reference: &R, data: &Dataset, cfg: &LossConfig) -> Result<Self> {
        if reference.n_features() != data.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: reference.n_features(),
                got: data.n_cols(),
            });
        }
        if data.protected().is_empty() {
            return Err(Error::invalid("dataset has no protected columns"));
        }
        if cfg.eval_rows == 0 || cfg.mc_samples == 0 {
            return Err(Error::invalid("loss needs positive eval_rows and mc_samples"));
        }
        let n = data.n_rows();
        let dim = data.n_cols();
        let x_cols = data.unprotected();
        let z_cols = data.protected().to_vec();
        let (levels, level_w) = mixing_levels(data, cfg.seed);
        let baseline = BaselineSampler::from_dataset(data, cfg.seed);
        let rows = Sampling::within_budget(cfg.eval_rows, n, cfg.seed).indices(n, ALL_FEATURES, 1);
        let inner = Sampling::within_budget(cfg.mc_samples, n, cfg.seed ^ 0xA5A5_A5A5);

        let mut b = Builder {
            dim,
            points: Vec::new(),
            terms: Vec::new(),
        };
        for (pos, &r) in rows.iter().enumerate() {
            let w = data.row(r);
            let key = pos as u64;
            match (cfg.measure, cfg.granularity) {
                (Measure::Mde, Granularity::Pooled) => {
                    let k = keyed_rng(cfg.seed, key, ALL_FEATURES).random_range(0..baseline.len());
                    let mut alt = w.to_vec();
                    let other = baseline.marginal_row(k);
                    for &j in &x_cols {
                        alt[j] = other[j];
                    }
                    let mut target = 0.0;
                    let mut hi = w.to_vec();
                    let mut lo = alt.clone();
                    for (level, &lw) in levels.iter().zip(&level_w) {
                        set(&mut hi, &z_cols, level);
                        set(&mut lo, &z_cols, level);
                        target += lw * (reference.predict(&hi) - reference.predict(&lo));
                    }
                    let a = b.push(w);
                    let c = b.push(&alt);
                    b.terms.push(Term {
                        row: pos,
                        target,
                        coefs: vec![(a, 1.0), (c, -1.0)],
                    });
                }
                (Measure::Mde, Granularity::PerFeature) => {
                    for &i in &x_cols {
                        let mut rng = keyed_rng(cfg.seed, key, i as u64);
                        let x_alt = baseline.marginal_row(rng.random_range(0..baseline.len()))[i];
                        let draws = inner.indices(baseline.len(), key, i as u64);
                        let scale = 1.0 / draws.len() as f64;
                        let mut target = 0.0;
                        let mut coefs = Vec::with_capacity(2 * draws.len());
                        let mut point = vec![0.0; dim];
                        for d in draws {
                            point.copy_from_slice(baseline.marginal_row(d));
                            point[i] = w[i];
                            let hi = reference.predict(&point);
                            coefs.push((b.push(&point), scale));
                            point[i] = x_alt;
                            let lo = reference.predict(&point);
                            coefs.push((b.push(&point), -scale));
                            target += scale * (hi - lo);
                        }
                        b.terms.push(Term {
                            row: pos,
                            target,
                            coefs,
                        });
                    }
                }
                (Measure::Shap, granularity) => {
                    let (ref_groups, tracked, cand_groups) = match granularity {
                        Granularity::Pooled => (
                            vec![x_cols.clone(), z_cols.clone()],
                            vec![0usize],
                            vec![x_cols.clone()],
                        ),
                        Granularity::PerFeature => (
                            singleton_groups(dim),
                            x_cols.clone(),
                            x_cols.iter().map(|&j| vec![j]).collect(),
                        ),
                    };
                    let draws = inner.indices(baseline.len(), key, ALL_FEATURES);
                    let scale = 1.0 / draws.len() as f64;

                    // reference: E_{Z''} of the mean Shapley value over draws
                    let mut targets = vec![0.0; tracked.len()];
                    let mut game = ShapleyGame::new(&ref_groups, dim);
                    let mut phi = vec![0.0; ref_groups.len()];
                    let mut wz = w.to_vec();
                    for (level, &lw) in levels.iter().zip(&level_w) {
                        set(&mut wz, &z_cols, level);
                        for &d in &draws {
                            game.solve(reference, &wz, baseline.joint_row(d), &mut phi);
                            for (t, &p) in targets.iter_mut().zip(&tracked) {
                                *t += lw * scale * phi[p];
                            }
                        }
                    }

                    // candidate: coefficients on the coalition points
                    let g = cand_groups.len();
                    let cand_game = ShapleyGame::new(&cand_groups, dim);
                    let weights = cand_game.weights().to_vec();
                    let mut coefs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); g];
                    let mut point = vec![0.0; dim];
                    for &d in &draws {
                        for mask in 0..(1usize << g) {
                            ShapleyGame::fill_point(&cand_groups, w, baseline.joint_row(d), mask, &mut point);
                            let idx = b.push(&point);
                            for (p, c) in coefs.iter_mut().enumerate() {
                                c.push((idx, scale * ShapleyGame::coefficient(&weights, p, mask)));
                            }
                        }
                    }
                    for (target, coefs) in targets.into_iter().zip(coefs) {
                        b.terms.push(Term {
                            row: pos,
                            target,
                            coefs,
                        });
                    }
                }
            }
        }
        Ok(Self {
            dim,
            points: b.points,
            terms: b.terms,
            n_rows: rows.len(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.points.len() / self.dim
    }

    fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    /// Loss of `candidate`: mean over evaluation rows of the summed squared
    /// influence gaps, with its standard error.
    pub fn evaluate<C: Predictor + ?Sized>(&self, candidate: &C) -> InfluenceEstimate {
        let outputs: Vec<f64> = (0..self.n_points()).map(|k| candidate.predict(self.point(k))).collect();
        let mut per_row = vec![0.0; self.n_rows];
        for t in &self.terms {
            let c: f64 = t.coefs.iter().map(|&(k, a)| a * outputs[k as usize]).sum();
            per_row[t.row] += (t.target - c).powi(2);
        }
        InfluenceEstimate::from_samples(&per_row)
    }

    /// Loss and its gradient with respect to the packed parameters (active
    /// weights, then bias) of a logistic candidate.
    pub fn value_and_gradient(&self, candidate: &LinearLogisticModel) -> (f64, Vec<f64>) {
        let active = candidate.active();
        let n_params = active.len() + 1;
        let mut prob = Vec::with_capacity(self.n_points());
        let mut slope = Vec::with_capacity(self.n_points());
        for k in 0..self.n_points() {
            let p = sigmoid(candidate.logit(self.point(k)));
            prob.push(p);
            slope.push(p * (1.0 - p));
        }
        let inv_n = 1.0 / self.n_rows as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; n_params];
        for t in &self.terms {
            let c: f64 = t.coefs.iter().map(|&(k, a)| a * prob[k as usize]).sum();
            let resid = c - t.target;
            loss += resid * resid * inv_n;
            let scale = 2.0 * resid * inv_n;
            for &(k, a) in &t.coefs {
                let s = scale * a * slope[k as usize];
                let u = self.point(k as usize);
                for (g, &j) in grad.iter_mut().zip(&active) {
                    *g += s * u[j];
                }
                grad[n_params - 1] += s;
            }
        }
        (loss, grad)
    }
}

struct Builder {
    dim: usize,
    points: Vec<f64>,
    terms: Vec<Term>,
}

impl Builder {
    fn push(&mut self, point: &[f64]) -> u32 {
        let idx = self.points.len() / self.dim;
        self.points.extend_from_slice(point);
        u32::try_from(idx).expect("loss problem exceeds u32 points")
    }
}

fn set(row: &mut [f64], cols: &[usize], values: &[f64]) {
    for (&j, &v) in cols.iter().zip(values) {
        row[j] = v;
    }
}

/// Empirical `Z` levels, subsampled uniformly when there are too many.
fn mixing_levels(data: &Dataset, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (levels, weights) = empirical_levels(data);
    if levels.len() <= MAX_EXACT_LEVELS {
        return (levels, weights);
    }
    let mut rng = keyed_rng(seed, ALL_FEATURES, 7);
    let picked: Vec<Vec<f64>> = (0..MAX_EXACT_LEVELS)
        .map(|_| data.protected_values(rng.random_range(0..data.n_rows())))
        .collect();
    let w = vec![1.0 / MAX_EXACT_LEVELS as f64; MAX_EXACT_LEVELS];
    (picked, w)
}

/// Fails if changing only the protected columns changes the candidate's output.
pub fn ensure_protected_free<C: Predictor + ?Sized>(candidate: &C, data: &Dataset) -> Result<()> {
    let (levels, _) = empirical_levels(data);
    let z_cols = data.protected();
    let probes: Vec<Vec<f64>> = if levels.len() >= 2 {
        levels.iter().take(4).cloned().collect()
    } else {
        let z = &levels[0];
        vec![z.clone(), z.iter().map(|v| v + 1.0).collect()]
    };
    let step = (data.n_rows() / 16).max(1);
    for i in (0..data.n_rows()).step_by(step).take(16) {
        let mut row = data.row(i).to_vec();
        set(&mut row, z_cols, &probes[0]);
        let first = candidate.predict(&row);
        for z in &probes[1..] {
            set(&mut row, z_cols, z);
            if candidate.predict(&row).to_bits() != first.to_bits() {
                return Err(Error::CandidateDependsOnProtected);
            }
        }
    }
    Ok(())
}

/// Squared-error gap between the reference's and the candidate's influence
/// of the unprotected features.
///
/// MDE compares `MDE(X, X'')` (pooled) or `MDE(X_i, X_i'')` per feature; SHAP
/// compares `E_{Z''} SHAP(X | X Z'')` or the per-feature version. The
/// candidate must ignore the protected columns.
pub fn influence_preservation_loss<C, R>(
    candidate: &C,
    reference: &R,
    data: &Dataset,
    cfg: &LossConfig,
) -> Result<InfluenceEstimate>
where
    C: Predictor + ?Sized,
    R: Predictor + ?Sized,
{
    if candidate.n_features() != data.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: candidate.n_features(),
            got: data.n_cols(),
        });
    }
    ensure_protected_free(candidate, data)?;
    Ok(LossProblem::build(reference, data, cfg)?.evaluate(candidate))
}
