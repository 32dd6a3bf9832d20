//! A linear structural causal model with an unfair path `Z → M` and a fair
//! path `Z → L`, and the two corrections that remove the unfair one.
//!
//! ```text
//! M = θm + θm_z Z + θm_c C + ε_m
//! L = θl + θl_z Z + θl_c C + θl_m M + ε_l
//! Y = θy + θy_z Z + θy_c C + θy_m M + θy_l L + ε_y
//! ```
//!
//! The marginal mixture replaces `Z` by its mean on unfair paths; the
//! path-specific counterfactual correction uses the fixed baseline `z' = 0`.
//! Both predictors differ by a constant, so the latter's squared error
//! exceeds the former's by that constant squared.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::predictor::{LinearPredictor, Predictor};

/// Column order of simulated samples and of the linear predictors.
pub const SCM_COLUMNS: [&str; 4] = ["C", "M", "L", "Z"];
const C: usize = 0;
const M: usize = 1;
const Z: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum ZDistribution {
    Bernoulli(f64),
    /// Uniform draws from the listed values.
    Empirical(Vec<f64>),
}

impl ZDistribution {
    pub fn mean(&self) -> f64 {
        match self {
            ZDistribution::Bernoulli(p) => *p,
            ZDistribution::Empirical(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ZDistribution::Bernoulli(p) => f64::from(u8::from(rng.random::<f64>() < *p)),
            ZDistribution::Empirical(v) => v[rng.random_range(0..v.len())],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSCM {
    /// `(θm, θm_z, θm_c)`
    pub theta_m: [f64; 3],
    /// `(θl, θl_z, θl_c, θl_m)`
    pub theta_l: [f64; 4],
    /// `(θy, θy_z, θy_c, θy_m, θy_l)`
    pub theta_y: [f64; 5],
    /// `(σ_m, σ_l, σ_y)`
    pub noise_std: [f64; 3],
    pub z_dist: ZDistribution,
}

impl Default for LinearSCM {
    fn default() -> Self {
        Self {
            theta_m: [0.0; 3],
            theta_l: [0.0; 4],
            theta_y: [0.0; 5],
            noise_std: [0.0; 3],
            z_dist: ZDistribution::Bernoulli(0.5),
        }
    }
}

impl LinearSCM {
    pub fn validate(&self) -> Result<()> {
        let coefs = self.theta_m.iter().chain(&self.theta_l).chain(&self.theta_y);
        if coefs.clone().any(|v| !v.is_finite()) {
            return Err(Error::Config("SCM coefficients must be finite".into()));
        }
        if self.noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("SCM noise standard deviations must be finite and nonnegative".into()));
        }
        match &self.z_dist {
            ZDistribution::Bernoulli(p) if !(0.0..=1.0).contains(p) => {
                Err(Error::Config(format!("Bernoulli p = {p} is outside [0, 1]")))
            }
            ZDistribution::Empirical(v) if v.is_empty() || v.iter().any(|x| !x.is_finite()) => {
                Err(Error::Config("empirical Z values must be finite and nonempty".into()))
            }
            _ => Ok(()),
        }
    }

    /// Reads `scm.theta_m`, `scm.theta_l`, `scm.theta_y`, `scm.noise_std`
    /// and either `scm.z_p` or `scm.z_values`; absent keys stay zero.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        fn fixed<const N: usize>(kv: &KeyValues, key: &str) -> Result<[f64; N]> {
            match kv.parse_list::<f64>(key)? {
                None => Ok([0.0; N]),
                Some(v) => v
                    .try_into()
                    .map_err(|v: Vec<f64>| Error::Config(format!("`{key}` needs {N} values, got {}", v.len()))),
            }
        }
        let z_dist = match (kv.parse_value::<f64>("scm.z_p")?, kv.parse_list::<f64>("scm.z_values")?) {
            (Some(_), Some(_)) => return Err(Error::Config("set only one of `scm.z_p` and `scm.z_values`".into())),
            (Some(p), None) => ZDistribution::Bernoulli(p),
            (None, Some(v)) => ZDistribution::Empirical(v),
            (None, None) => ZDistribution::Bernoulli(0.5),
        };
        let scm = Self {
            theta_m: fixed(kv, "scm.theta_m")?,
            theta_l: fixed(kv, "scm.theta_l")?,
            theta_y: fixed(kv, "scm.theta_y")?,
            noise_std: fixed(kv, "scm.noise_std")?,
            z_dist,
        };
        scm.validate()?;
        Ok(scm)
    }
}

/// Simulated draws, one vector per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSample {
    pub c: Vec<f64>,
    pub m: Vec<f64>,
    pub l: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl ScmSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> [f64; 4] {
        [self.c[i], self.m[i], self.l[i], self.z[i]]
    }

    /// Features `C, M, L, Z` with `Z` protected. `Y` is continuous and not
    /// carried; every label is 0.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let rows = (0..self.len()).map(|i| self.row(i).to_vec()).collect();
        Dataset::new(
            SCM_COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows,
            vec![0; self.len()],
            vec![Z],
        )
    }
}

pub fn simulate_scm(scm: &LinearSCM, n: usize, seed: u64) -> Result<ScmSample> {
    scm.validate()?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |rng: &mut ChaCha8Rng, sd: f64| -> f64 {
        if sd == 0.0 {
            0.0
        } else {
            Normal::new(0.0, sd).expect("validated std").sample(rng)
        }
    };
    let [tm, tm_z, tm_c] = scm.theta_m;
    let [tl, tl_z, tl_c, tl_m] = scm.theta_l;
    let [ty, ty_z, ty_c, ty_m, ty_l] = scm.theta_y;
    let [sm, sl, sy] = scm.noise_std;
    let mut s = ScmSample {
        c: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        l: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let c: f64 = StandardNormal.sample(&mut rng);
        let z = scm.z_dist.sample(&mut rng);
        let m = tm + tm_z * z + tm_c * c + noise(&mut rng, sm);
        let l = tl + tl_z * z + tl_c * c + tl_m * m + noise(&mut rng, sl);
        let y = ty + ty_z * z + ty_c * c + ty_m * m + ty_l * l + noise(&mut rng, sy);
        s.c.push(c);
        s.m.push(m);
        s.l.push(l);
        s.z.push(z);
        s.y.push(y);
    }
    Ok(s)
}

/// Affine form over `(c, m, l, z)` plus a constant.
#[derive(Debug, Clone, Copy)]
struct Affine([f64; 4], f64);

impl Affine {
    fn var(j: usize) -> Self {
        let mut w = [0.0; 4];
        w[j] = 1.0;
        Affine(w, 0.0)
    }

    fn constant(v: f64) -> Self {
        Affine([0.0; 4], v)
    }

    fn add(self, k: f64, other: Affine) -> Self {
        let mut w = self.0;
        for (a, b) in w.iter_mut().zip(other.0) {
            *a += k * b;
        }
        Affine(w, self.1 + k * other.1)
    }

    fn into_predictor(self) -> LinearPredictor {
        LinearPredictor::new(self.0.to_vec(), self.1)
    }
}

/// The mixture correction: `m̂ = m − θm_z (z − z̄)`,
/// `l̂ = θl + θl_z z + θl_c c + θl_m m̂`,
/// `ŷ = θy + θy_z z̄ + θy_c c + θy_m m̂ + θy_l l̂`.
pub fn build_mim_predictor(scm: &LinearSCM, z_mean: f64) -> LinearPredictor {
    let [_, tm_z, _] = scm.theta_m;
    let [tl, tl_z, tl_c, tl_m] = scm.theta_l;
    let [ty, ty_z, ty_c, ty_m, ty_l] = scm.theta_y;
    let m_hat = Affine::var(M).add(-tm_z, Affine::var(Z)).add(tm_z, Affine::constant(z_mean));
    let l_hat = Affine::constant(tl)
        .add(tl_z, Affine::var(Z))
        .add(tl_c, Affine::var(C))
        .add(tl_m, m_hat);
    Affine::constant(ty + ty_z * z_mean)
        .add(ty_c, Affine::var(C))
        .add(ty_m, m_hat)
        .add(ty_l, l_hat)
        .into_predictor()
}

/// The fixed-baseline correction, which equals the mixture correction at
/// `z̄ = 0`.
pub fn build_pscf_predictor(scm: &LinearSCM) -> LinearPredictor {
    build_mim_predictor(scm, 0.0)
}

/// `Δ = z̄ (θy_z + θy_m θm_z + θy_l θl_m θm_z)`.
pub fn delta(scm: &LinearSCM, z_mean: f64) -> f64 {
    let tm_z = scm.theta_m[1];
    let tl_m = scm.theta_l[3];
    let [_, ty_z, _, ty_m, ty_l] = scm.theta_y;
    z_mean * (ty_z + ty_m * tm_z + ty_l * tl_m * tm_z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseGap {
    pub mse_pscf: f64,
    pub mse_mim: f64,
    pub delta_sq: f64,
    /// `|mse_pscf − mse_mim − Δ²|`
    pub residual: f64,
    /// Standard error of the per-row squared-error difference.
    pub stderr: f64,
    /// Sample mean of `Z` used as `z̄`.
    pub z_mean: f64,
}

/// Simulates the SCM and compares both predictors' squared error, with `z̄`
/// the sample mean of `Z`.
pub fn mse_gap_check(scm: &LinearSCM, n: usize, seed: u64) -> Result<MseGap> {
    if n < 2 {
        return Err(Error::invalid("mse_gap_check needs at least 2 rows"));
    }
    let s = simulate_scm(scm, n, seed)?;
    let z_mean = s.z.iter().sum::<f64>() / n as f64;
    let mim = build_mim_predictor(scm, z_mean);
    let pscf = build_pscf_predictor(scm);
    let mut se_mim = 0.0;
    let mut se_pscf = 0.0;
    let mut diffs = Vec::with_capacity(n);
    for i in 0..n {
        let row = s.row(i);
        let e_mim = (s.y[i] - mim.predict(&row)).powi(2);
        let e_pscf = (s.y[i] - pscf.predict(&row)).powi(2);
        se_mim += e_mim;
        se_pscf += e_pscf;
        diffs.push(e_pscf - e_mim);
    }
    let nf = n as f64;
    let mean_diff = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0);
    let mse_mim = se_mim / nf;
    let mse_pscf = se_pscf / nf;
    let d = delta(scm, z_mean);
    if !(mse_mim.is_finite() && mse_pscf.is_finite()) {
        return Err(Error::Numeric("squared error overflowed".into()));
    }
    Ok(MseGap {
        mse_pscf,
        mse_mim,
        delta_sq: d * d,
        residual: (mse_pscf - mse_mim - d * d).abs(),
        stderr: (var / nf).sqrt(),
        z_mean,
    })
}
