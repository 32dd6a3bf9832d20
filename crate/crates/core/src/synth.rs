//! Synthetic scenarios, CSV ingestion and train/test splitting.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::model::sigmoid;

/// Pivots above `-PSD_TOLERANCE` are accepted; those within it are treated
/// as exact zeros, so singular but valid matrices factor.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Lower-triangular `L` with `L Lᵀ = corr`, row-major.
pub fn cholesky_psd(corr: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = corr.len();
    if k == 0 {
        return Err(Error::invalid("correlation matrix is empty"));
    }
    for (i, row) in corr.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("correlation matrix has non-finite entries"));
        }
        if (row[i] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("diagonal entry {i} is {} not 1", row[i])));
        }
        for j in 0..i {
            if (row[j] - corr[j][i]).abs() > 1e-12 {
                return Err(Error::invalid(format!("correlation matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut l = vec![vec![0.0; k]; k];
    for j in 0..k {
        let pivot = corr[j][j] - l[j][..j].iter().map(|v| v * v).sum::<f64>();
        if pivot < -PSD_TOLERANCE {
            return Err(Error::NotPositiveSemiDefinite { pivot: j, value: pivot });
        }
        let d = if pivot <= PSD_TOLERANCE { 0.0 } else { pivot.sqrt() };
        l[j][j] = d;
        for i in j + 1..k {
            let s = corr[i][j] - (0..j).map(|m| l[i][m] * l[j][m]).sum::<f64>();
            if d == 0.0 {
                if s.abs() > 1e-8 {
                    return Err(Error::NotPositiveSemiDefinite { pivot: j, value: pivot });
                }
            } else {
                l[i][j] = s / d;
            }
        }
    }
    Ok(l)
}

/// `n` draws from a zero-mean Gaussian with standard normal marginals and
/// correlation `corr`, as rows.
pub fn sample_correlated_gaussian(corr: &[Vec<f64>], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let l = cholesky_psd(corr)?;
    let k = l.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = vec![0.0; k];
    Ok((0..n)
        .map(|_| {
            for e in eps.iter_mut() {
                *e = StandardNormal.sample(&mut rng);
            }
            (0..k).map(|i| (0..=i).map(|m| l[i][m] * eps[m]).sum()).collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// `y ~ σ(x1 + x2 + z + 1)`, with `X2` independent of the rest.
    A,
    /// `y ~ σ(x2 + 1)`, with `corr(X2, Z-latent) = 0.5`.
    B,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::A => "A",
            Scenario::B => "B",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Latent correlation between `X1` and the Gaussian behind `Z`.
    pub r: f64,
    pub n: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, r: f64, n: usize, seed: u64) -> Self {
        Self { scenario, r, n, seed }
    }

    /// Latent correlation matrix over `(X1, X2, Z-latent)`.
    pub fn latent_correlation(&self) -> Vec<Vec<f64>> {
        let x2z = match self.scenario {
            Scenario::A => 0.0,
            Scenario::B => 0.5,
        };
        vec![
            vec![1.0, 0.0, self.r],
            vec![0.0, 1.0, x2z],
            vec![self.r, x2z, 1.0],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.r) {
            return Err(Error::invalid(format!("r = {} is outside [0, 1)", self.r)));
        }
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        cholesky_psd(&self.latent_correlation()).map(|_| ())
    }
}

pub const SCENARIO_COLUMNS: [&str; 3] = ["X1", "X2", "Z"];

/// Columns `X1, X2, Z` with `Z = 1{latent > 0}` protected and Bernoulli labels.
pub fn make_scenario(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let latent = sample_correlated_gaussian(&cfg.latent_correlation(), cfg.n, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut labels = Vec::with_capacity(cfg.n);
    let rows: Vec<Vec<f64>> = latent
        .into_iter()
        .map(|v| {
            let z = f64::from(u8::from(v[2] > 0.0));
            let logit = match cfg.scenario {
                Scenario::A => v[0] + v[1] + z + 1.0,
                Scenario::B => v[1] + 1.0,
            };
            labels.push(u8::from(rng.random::<f64>() < sigmoid(logit)));
            vec![v[0], v[1], z]
        })
        .collect();
    Dataset::new(
        SCENARIO_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows,
        labels,
        vec![2],
    )
}

/// Sample Pearson correlation; with one binary argument this is the
/// point-biserial correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least two points"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Numeric("correlation of a constant column".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Column roles for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub label: String,
    pub protected: Vec<String>,
}

impl Schema {
    /// Reads `label=` and `protected=` (comma-separated) keys.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let label = kv
            .get("label")
            .ok_or_else(|| Error::Schema("missing key `label`".into()))?
            .to_string();
        let protected: Vec<String> = kv
            .get("protected")
            .ok_or_else(|| Error::Schema("missing key `protected`".into()))?
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if protected.is_empty() {
            return Err(Error::Schema("no protected column named".into()));
        }
        if protected.contains(&label) {
            return Err(Error::Schema(format!("`{label}` is both label and protected")));
        }
        Ok(Self { label, protected })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }
}

/// Reads a headed CSV; every column except the label becomes a feature, in
/// file order.
pub fn load_dataset_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset_csv(file, schema)
}

pub fn read_dataset_csv<R: std::io::Read>(input: R, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found")))
    };
    let label_col = find(&schema.label)?;
    let features: Vec<usize> = (0..header.len()).filter(|&j| j != label_col).collect();
    let names: Vec<String> = features.iter().map(|&j| header[j].clone()).collect();
    let protected = schema
        .protected
        .iter()
        .map(|p| {
            find(p)?;
            Ok(names.iter().position(|n| n == p).expect("non-label column"))
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |j: usize| record.get(j).unwrap_or("");
        let label = cell(label_col);
        labels.push(match label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line,
                    column: schema.label.clone(),
                    message: format!("label `{other}` is not 0 or 1"),
                })
            }
        });
        for &j in &features {
            let v: f64 = cell(j).parse().map_err(|_| Error::Parse {
                line,
                column: header[j].clone(),
                message: format!("`{}` is not a number", cell(j)),
            })?;
            values.push(v);
        }
    }
    let data = Dataset::from_flat(names, values, labels, protected)?;
    data.check_finite()?;
    Ok(data)
}

/// Shuffles rows by `seed` and splits off `round(test_fraction · N)` test rows.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::invalid("splitting needs at least two rows"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_fraction} is outside (0, 1)")));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::invalid(format!("test fraction {test_fraction} leaves an empty part of {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = idx.split_at(n_test);
    Ok((data.select(train)?, data.select(test)?))
}
