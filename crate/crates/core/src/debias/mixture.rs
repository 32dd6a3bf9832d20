use std::collections::HashMap;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kv::{format_f64_list, KeyValues};
use crate::model::LinearLogisticModel;
use crate::predictor::Predictor;

/// A base model averaged over a mixing distribution on the protected columns.
///
/// `predict(x, z) = Σ_j w_j · base(x, z_j)`; the input's own protected values
/// are never read, so the output is a function of `X` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel<M> {
    base: M,
    protected: Vec<usize>,
    levels: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl<M: Predictor> MixtureModel<M> {
    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn protected(&self) -> &[usize] {
        &self.protected
    }

    /// Mixing values of `Z`, one vector per support point.
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// Normalized mixing weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_base(self) -> M {
        self.base
    }
}

impl<M: Predictor> Predictor for MixtureModel<M> {
    fn n_features(&self) -> usize {
        self.base.n_features()
    }

    fn predict(&self, row: &[f64]) -> f64 {
        let mut point = row.to_vec();
        let mut acc = 0.0;
        for (level, &w) in self.levels.iter().zip(&self.weights) {
            for (&j, &v) in self.protected.iter().zip(level) {
                point[j] = v;
            }
            acc += w * self.base.predict(&point);
        }
        acc
    }
}

/// Wraps `base` in the mixture `Σ_j w_j · base(x, levels_j)`.
///
/// Weights are normalized to sum to one.
pub fn interventional_mixture<M: Predictor>(
    base: M,
    protected: Vec<usize>,
    levels: Vec<Vec<f64>>,
    weights: Vec<f64>,
) -> Result<MixtureModel<M>> {
    if levels.is_empty() {
        return Err(Error::invalid("mixing reservoir is empty"));
    }
    if levels.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: levels.len(),
            got: weights.len(),
        });
    }
    if protected.is_empty() {
        return Err(Error::invalid("mixture needs at least one protected column"));
    }
    if let Some(&j) = protected.iter().find(|&&j| j >= base.n_features()) {
        return Err(Error::invalid(format!("protected column {j} out of range")));
    }
    if let Some(level) = levels.iter().find(|l| l.len() != protected.len()) {
        return Err(Error::DimensionMismatch {
            expected: protected.len(),
            got: level.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("mixing weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("mixing weights sum to zero"));
    }
    Ok(MixtureModel {
        base,
        protected,
        levels,
        weights: weights.iter().map(|w| w / total).collect(),
    })
}

/// Distinct protected levels of `data` in order of first appearance, with
/// their empirical frequencies.
pub fn empirical_levels(data: &Dataset) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut levels = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for i in 0..data.n_rows() {
        let z = data.protected_values(i);
        let key: Vec<u64> = z.iter().map(|v| (v + 0.0).to_bits()).collect();
        match index.get(&key) {
            Some(&k) => counts[k] += 1,
            None => {
                index.insert(key, levels.len());
                levels.push(z);
                counts.push(1);
            }
        }
    }
    let n = data.n_rows() as f64;
    (levels, counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Marginal interventional mixture: `base` averaged over the empirical
/// marginal of the protected columns of `data`.
pub fn mim<M: Predictor>(base: M, data: &Dataset) -> Result<MixtureModel<M>> {
    if data.protected().is_empty() {
        return Err(Error::invalid("dataset has no protected columns"));
    }
    if base.n_features() != data.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: base.n_features(),
            got: data.n_cols(),
        });
    }
    let (levels, weights) = empirical_levels(data);
    interventional_mixture(base, data.protected().to_vec(), levels, weights)
}

impl MixtureModel<LinearLogisticModel> {
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = self.base.to_kv();
        kv.set("model", "linear_logistic_mixture");
        kv.set(
            "mixture.protected",
            self.protected
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv.set(
            "mixture.levels",
            self.levels
                .iter()
                .map(|l| format_f64_list(l))
                .collect::<Vec<_>>()
                .join(";"),
        );
        kv.set("mixture.weights", format_f64_list(&self.weights));
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let kind = kv.require("model")?;
        if kind != "linear_logistic_mixture" {
            return Err(Error::Config(format!("expected a linear_logistic_mixture model, got `{kind}`")));
        }
        let mut base_kv = kv.clone();
        base_kv.set("model", "linear_logistic");
        let base = LinearLogisticModel::from_kv(&base_kv)?;
        let protected: Vec<usize> = kv
            .parse_list("mixture.protected")?
            .ok_or_else(|| Error::Config("missing key `mixture.protected`".into()))?;
        let levels_text = kv.require("mixture.levels")?;
        let levels = levels_text
            .split(';')
            .map(crate::kv::parse_list)
            .collect::<std::result::Result<Vec<Vec<f64>>, ()>>()
            .map_err(|_| Error::Config(format!("bad mixture levels `{levels_text}`")))?;
        let weights: Vec<f64> = kv
            .parse_list("mixture.weights")?
            .ok_or_else(|| Error::Config("missing key `mixture.weights`".into()))?;
        let mut m = interventional_mixture(base, protected, levels, weights.clone())?;
        // keep the stored weights bit-for-bit
        m.weights = weights;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sigmoid;
    use crate::predictor::{FnPredictor, LinearPredictor};

    fn loan_data() -> Dataset {
        // columns: beta0 proxy unused, x1, z
        let rows = vec![
            vec![1.0, 0.0],
            vec![2.0, 1.0],
            vec![3.0, 1.0],
            vec![4.0, 0.0],
            vec![5.0, 1.0],
        ];
        Dataset::new(vec!["x1".into(), "z".into()], rows, vec![0, 1, 0, 1, 0], vec![1]).unwrap()
    }

    #[test]
    fn z_free_base_is_unchanged() {
        let base = FnPredictor::new(2, |r: &[f64]| 3.0 * r[0] - 1.0);
        let m = mim(&base, &loan_data()).unwrap();
        for x in [-2.0, 0.0, 4.5] {
            assert_eq!(m.predict(&[x, 7.0]), base.predict(&[x, 0.0]));
        }
    }

    #[test]
    fn symmetric_sigmoid_mixture() {
        let base = FnPredictor::new(2, |r: &[f64]| sigmoid(r[0] + r[1]));
        let m = interventional_mixture(base, vec![1], vec![vec![-1.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        assert!((m.predict(&[0.0, 0.3]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loan_example_uses_mean_z() {
        let beta0 = 10.0;
        let base = FnPredictor::new(2, move |r: &[f64]| beta0 - r[0] - r[1]);
        let data = loan_data();
        let zbar = 0.6;
        let m = mim(base, &data).unwrap();
        for x1 in [0.0, 1.5, -3.0] {
            for z in [0.0, 1.0] {
                assert!((m.predict(&[x1, z]) - (beta0 - x1 - zbar)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binary_levels_get_empirical_frequencies() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, f64::from(i % 2)]).collect();
        let data = Dataset::new(vec!["x".into(), "z".into()], rows, vec![0; 10], vec![1]).unwrap();
        let (levels, weights) = empirical_levels(&data);
        assert_eq!(levels, vec![vec![0.0], vec![1.0]]);
        assert_eq!(weights, vec![0.5, 0.5]);
    }

    #[test]
    fn linear_base_mixture_equals_mean_substitution() {
        let base = LinearPredictor::new(vec![0.4, -2.0], 0.3);
        let data = loan_data();
        let m = mim(&base, &data).unwrap();
        for x in [-1.0, 0.0, 2.0] {
            assert!((m.predict(&[x, 1.0]) - base.predict(&[x, 0.6])).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_reservoirs() {
        let base = LinearPredictor::new(vec![1.0, 1.0], 0.0);
        assert!(interventional_mixture(&base, vec![1], vec![], vec![]).is_err());
        assert!(interventional_mixture(&base, vec![1], vec![vec![0.0]], vec![-1.0]).is_err());
        assert!(interventional_mixture(&base, vec![1], vec![vec![0.0]], vec![0.0]).is_err());
        assert!(interventional_mixture(&base, vec![1], vec![vec![0.0, 1.0]], vec![1.0]).is_err());
    }

    #[test]
    fn weights_are_normalized() {
        let base = LinearPredictor::new(vec![1.0, 1.0], 0.0);
        let m = interventional_mixture(&base, vec![1], vec![vec![0.0], vec![2.0]], vec![1.0, 3.0]).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
        assert_eq!(m.predict(&[0.0, 100.0]), 1.5);
    }

    #[test]
    fn text_round_trip() {
        let base = LinearLogisticModel::dense(vec![0.3, -1.1], 0.2).unwrap();
        let m = mim(base, &loan_data()).unwrap();
        let text = m.to_kv().to_text();
        let back = MixtureModel::from_kv(&KeyValues::parse(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
