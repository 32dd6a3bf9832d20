//! Group-fairness metrics over predictions partitioned by a protected level.
//!
//! With binary `Z` the metrics compare group `z = 0` against `z = 1`. With
//! more levels each group is compared against a reference level and the
//! largest gap is reported.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, label: u8, predicted: u8) {
        match (label != 0, predicted != 0) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.tp + self.fp, self.total())
    }

    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.positives())
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.negatives())
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    fn scaled(&self, k: u64) -> Self {
        Self {
            tp: self.tp * k,
            fp: self.fp * k,
            tn: self.tn * k,
            fn_: self.fn_ * k,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Confusion counts per protected level, sorted by level.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedOutcomes {
    groups: Vec<(f64, ConfusionCounts)>,
    reference: usize,
}

impl GroupedOutcomes {
    /// Groups labels and predicted labels by the protected value of each row.
    /// The reference is the largest level, which is `z = 1` for binary data.
    pub fn from_predictions(labels: &[u8], predicted: &[u8], z: &[f64]) -> Result<Self> {
        if labels.len() != predicted.len() || labels.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: if predicted.len() != labels.len() { predicted.len() } else { z.len() },
            });
        }
        if labels.iter().chain(predicted).any(|&v| v > 1) {
            return Err(Error::invalid("labels and predictions must be 0 or 1"));
        }
        if let Some(v) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("protected value {v} is not finite")));
        }
        let mut groups: Vec<(f64, ConfusionCounts)> = Vec::new();
        for ((&y, &p), &level) in labels.iter().zip(predicted).zip(z) {
            let level = level + 0.0;
            match groups.iter_mut().find(|(l, _)| *l == level) {
                Some((_, c)) => c.record(y, p),
                None => {
                    let mut c = ConfusionCounts::default();
                    c.record(y, p);
                    groups.push((level, c));
                }
            }
        }
        Self::from_counts(groups)
    }

    /// Builds from explicit counts; levels must be distinct.
    pub fn from_counts(mut groups: Vec<(f64, ConfusionCounts)>) -> Result<Self> {
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        if groups.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("duplicate protected level"));
        }
        let reference = groups.len().saturating_sub(1);
        Ok(Self { groups, reference })
    }

    /// Two groups `z = 0` and `z = 1` from counts.
    pub fn binary(group0: ConfusionCounts, group1: ConfusionCounts) -> Self {
        Self {
            groups: vec![(0.0, group0), (1.0, group1)],
            reference: 1,
        }
    }

    /// Declares the reference level for multi-level comparisons.
    pub fn with_reference(mut self, level: f64) -> Result<Self> {
        self.reference = self
            .groups
            .iter()
            .position(|(l, _)| *l == level)
            .ok_or_else(|| Error::UnknownLevel(vec![level]))?;
        Ok(self)
    }

    pub fn groups(&self) -> &[(f64, ConfusionCounts)] {
        &self.groups
    }

    pub fn reference_level(&self) -> Option<f64> {
        self.groups.get(self.reference).map(|g| g.0)
    }

    /// The same outcomes with the two binary groups' labels exchanged.
    pub fn swapped(&self) -> Result<Self> {
        if self.groups.len() != 2 {
            return Err(Error::invalid("swapping needs exactly two groups"));
        }
        Ok(Self {
            groups: vec![(self.groups[0].0, self.groups[1].1), (self.groups[1].0, self.groups[0].1)],
            reference: self.reference,
        })
    }

    /// Every count multiplied by `k`, as if each row appeared `k` times.
    pub fn duplicated(&self, k: u64) -> Self {
        Self {
            groups: self.groups.iter().map(|&(l, c)| (l, c.scaled(k))).collect(),
            reference: self.reference,
        }
    }

    /// `(other, reference)` count pairs; errors unless at least two groups.
    fn pairs(&self, metric: &'static str) -> Result<Vec<(&ConfusionCounts, &ConfusionCounts)>> {
        if self.groups.len() < 2 {
            return Err(Error::UndefinedMetric(metric));
        }
        let r = &self.groups[self.reference].1;
        Ok(self
            .groups
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.reference)
            .map(|(_, (_, c))| (c, r))
            .collect())
    }

    /// Largest gap over the `(other, reference)` pairs. `f` yields `None`
    /// only on overflow.
    fn max_gap(&self, metric: &'static str, f: impl Fn(&ConfusionCounts, &ConfusionCounts) -> Option<Frac>) -> Result<f64> {
        let mut best: f64 = 0.0;
        for (a, b) in self.pairs(metric)? {
            if undefined_rate(metric, a, b) {
                return Err(Error::UndefinedMetric(metric));
            }
            let gap = f(a, b).ok_or_else(too_large)?;
            best = best.max(gap.value());
        }
        Ok(best)
    }
}

fn undefined_rate(metric: &str, a: &ConfusionCounts, b: &ConfusionCounts) -> bool {
    let missing = |c: &ConfusionCounts| match metric {
        "equal_opportunity_diff" => c.positives() == 0,
        "equalized_odds_gap" => c.positives() == 0 || c.negatives() == 0,
        _ => c.total() == 0,
    };
    missing(a) || missing(b)
}

/// Exact rational over counts. Gaps and ratios are formed here and divided
/// once at the end, so `6/10 − 4/10` reports `0.2` and scaling every count
/// by `k` cannot change a result.
#[derive(Debug, Clone, Copy)]
struct Frac {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

impl Frac {
    fn new(num: i128, den: i128) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den).max(1) * den.signum();
        Some(Self {
            num: num / g,
            den: den / g,
        })
    }

    fn of(num: u64, den: u64) -> Option<Self> {
        Self::new(i128::from(num), i128::from(den))
    }

    fn abs_diff(self, o: Self) -> Option<Self> {
        let num = self.num.checked_mul(o.den)?.checked_sub(o.num.checked_mul(self.den)?)?;
        Self::new(num.abs(), self.den.checked_mul(o.den)?)
    }

    fn add(self, o: Self) -> Option<Self> {
        let num = self.num.checked_mul(o.den)?.checked_add(o.num.checked_mul(self.den)?)?;
        Self::new(num, self.den.checked_mul(o.den)?)
    }

    fn div(self, o: Self) -> Option<Self> {
        Self::new(self.num.checked_mul(o.den)?, self.den.checked_mul(o.num)?)
    }

    fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn rate_gap(a: (u64, u64), b: (u64, u64)) -> Option<Frac> {
    Frac::of(a.0, a.1)?.abs_diff(Frac::of(b.0, b.1)?)
}

fn too_large() -> Error {
    Error::Numeric("confusion counts too large for exact metric arithmetic".into())
}

/// `|P(ŷ=1 | z=0) − P(ŷ=1 | z=1)|`
pub fn demographic_disparity(g: &GroupedOutcomes) -> Result<f64> {
    g.max_gap("demographic_disparity", |a, b| {
        rate_gap((a.tp + a.fp, a.total()), (b.tp + b.fp, b.total()))
    })
}

/// `P(ŷ=1 | z=0) / P(ŷ=1 | z=1)`. With more levels, the ratio against the
/// reference that lies farthest from 1 on a log scale.
pub fn disparate_impact(g: &GroupedOutcomes) -> Result<f64> {
    const NAME: &str = "disparate_impact";
    let mut best: Option<f64> = None;
    for (a, b) in g.pairs(NAME)? {
        let num = Frac::of(a.tp + a.fp, a.total()).ok_or(Error::UndefinedMetric(NAME))?;
        let den = Frac::of(b.tp + b.fp, b.total()).ok_or(Error::UndefinedMetric(NAME))?;
        if den.num == 0 {
            return Err(Error::UndefinedMetric(NAME));
        }
        // The ratio ≥ 1 is computed directly and the other direction as its
        // reciprocal, so swapping the groups maps r to exactly 1.0 / r.
        let r = if num.num == 0 {
            0.0
        } else if num.num.checked_mul(den.den).ok_or_else(too_large)? >= den.num.checked_mul(num.den).ok_or_else(too_large)? {
            num.div(den).ok_or_else(too_large)?.value()
        } else {
            1.0 / den.div(num).ok_or_else(too_large)?.value()
        };
        let worse = match best {
            None => true,
            Some(cur) => r.ln().abs() > cur.ln().abs(),
        };
        if worse {
            best = Some(r);
        }
    }
    best.ok_or(Error::UndefinedMetric(NAME))
}

/// `|TPR₀ − TPR₁|`
pub fn equal_opportunity_diff(g: &GroupedOutcomes) -> Result<f64> {
    g.max_gap("equal_opportunity_diff", |a, b| rate_gap((a.tp, a.positives()), (b.tp, b.positives())))
}

/// `(|FPR₀ − FPR₁| + |TPR₀ − TPR₁|) / 2`
pub fn equalized_odds_gap(g: &GroupedOutcomes) -> Result<f64> {
    g.max_gap("equalized_odds_gap", |a, b| {
        let fpr = rate_gap((a.fp, a.negatives()), (b.fp, b.negatives()))?;
        let tpr = rate_gap((a.tp, a.positives()), (b.tp, b.positives()))?;
        fpr.add(tpr)?.div(Frac::new(2, 1)?)
    })
}

/// `|acc₀ − acc₁|`
pub fn accuracy_disparity(g: &GroupedOutcomes) -> Result<f64> {
    g.max_gap("accuracy_disparity", |a, b| rate_gap((a.tp + a.tn, a.total()), (b.tp + b.tn, b.total())))
}

pub const METRICS: [&str; 6] = [
    "accuracy",
    "demographic_disparity",
    "disparate_impact",
    "equal_opportunity_diff",
    "equalized_odds_gap",
    "accuracy_disparity",
];

/// Computes a metric from [`METRICS`] by name.
pub fn metric(g: &GroupedOutcomes, name: &str) -> Result<f64> {
    match name {
        "accuracy" => {
            let total = g.groups.iter().fold(ConfusionCounts::default(), |acc, (_, c)| ConfusionCounts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                tn: acc.tn + c.tn,
                fn_: acc.fn_ + c.fn_,
            });
            total.accuracy().ok_or(Error::UndefinedMetric("accuracy"))
        }
        "demographic_disparity" => demographic_disparity(g),
        "disparate_impact" => disparate_impact(g),
        "equal_opportunity_diff" => equal_opportunity_diff(g),
        "equalized_odds_gap" => equalized_odds_gap(g),
        "accuracy_disparity" => accuracy_disparity(g),
        _ => Err(Error::invalid(format!("unknown metric `{name}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessRow {
    pub method: String,
    pub metric: String,
    /// `None` when the metric is undefined for the data.
    pub value: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

/// Accuracy and the five disparity metrics of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub rows: Vec<FairnessRow>,
}

impl FairnessReport {
    pub fn new(method: &str, g: &GroupedOutcomes) -> Self {
        let rows = METRICS
            .iter()
            .map(|&m| FairnessRow {
                method: method.to_string(),
                metric: m.to_string(),
                value: metric(g, m).ok(),
                ci: None,
            })
            .collect();
        Self { rows }
    }

    pub fn get(&self, metric: &str) -> Option<&FairnessRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Writes `method,metric,value,ci_low,ci_high`; undefined cells are `null`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "metric", "value", "ci_low", "ci_high"])?;
        let cell = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.metric.clone(),
                cell(r.value),
                cell(r.ci.map(|c| c.0)),
                cell(r.ci.map(|c| c.1)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
