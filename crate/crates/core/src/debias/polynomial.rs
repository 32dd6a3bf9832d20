//! Numeric check of the optimal mixing scalar for a single monomial model.
//!
//! For `y(x, z) = α x^k z^l`, any interventional mixture is `β x^k` with
//! `β = α E[Z̃^l]`, and the pooled SHAP-preservation objective is quadratic
//! in `β`. Its minimizer is `α · mean(Z^l)`, the value the marginal mixture
//! produces.

use crate::error::{Error, Result};

pub const MAX_EXPONENT: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolynomialToyModel {
    pub alpha: f64,
    pub k: u32,
    pub l: u32,
}

impl PolynomialToyModel {
    pub fn new(alpha: f64, k: u32, l: u32) -> Result<Self> {
        if k > MAX_EXPONENT || l > MAX_EXPONENT {
            return Err(Error::invalid(format!("exponents above {MAX_EXPONENT} are not supported")));
        }
        if !alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite"));
        }
        Ok(Self { alpha, k, l })
    }

    pub fn eval(&self, x: f64, z: f64) -> f64 {
        self.alpha * x.powi(self.k as i32) * z.powi(self.l as i32)
    }

    /// The mixture coefficient of the marginal interventional mixture.
    pub fn marginal_beta(&self, zs: &[f64]) -> f64 {
        self.alpha * mean(zs.iter().map(|z| z.powi(self.l as i32)))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut s = 0.0;
    for v in it {
        s += v;
        n += 1;
    }
    s / n as f64
}

fn check_samples(xs: &[f64], zs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if xs.len() != zs.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: zs.len(),
        });
    }
    Ok(())
}

/// Empirical pooled SHAP-preservation objective of the mixture `β x^k`.
///
/// With `(X', Z')` drawn jointly and `Z''` independently from the samples,
/// the inner expectation at `x` is
/// `α (x^k m_z − m_x m_z + x^k m_z − m_xz) / 2 − β (x^k − m_x)` where
/// `m_x = mean X^k`, `m_z = mean Z^l` and `m_xz = mean X^k Z^l`.
pub fn objective(toy: &PolynomialToyModel, xs: &[f64], zs: &[f64], beta: f64) -> Result<f64> {
    check_samples(xs, zs)?;
    let (k, l) = (toy.k as i32, toy.l as i32);
    let m_x = mean(xs.iter().map(|x| x.powi(k)));
    let m_z = mean(zs.iter().map(|z| z.powi(l)));
    let m_xz = mean(xs.iter().zip(zs).map(|(x, z)| x.powi(k) * z.powi(l)));
    Ok(mean(xs.iter().map(|x| {
        let xk = x.powi(k);
        let inner = toy.alpha * (xk * m_z - m_x * m_z + xk * m_z - m_xz) / 2.0 - beta * (xk - m_x);
        inner * inner
    })))
}

/// Grid minimizer of [`objective`].
///
/// Fails with [`Error::FlatObjective`] when `X^k` has no variance, since the
/// objective then does not depend on `β`.
pub fn optimal_beta(toy: &PolynomialToyModel, xs: &[f64], zs: &[f64], grid: &[f64]) -> Result<f64> {
    check_samples(xs, zs)?;
    if grid.is_empty() {
        return Err(Error::invalid("beta grid is empty"));
    }
    let k = toy.k as i32;
    let m_x = mean(xs.iter().map(|x| x.powi(k)));
    let var = mean(xs.iter().map(|x| (x.powi(k) - m_x).powi(2)));
    if !(var > 1e-15 * (1.0 + m_x * m_x)) {
        return Err(Error::FlatObjective(format!("X^{} has zero sample variance", toy.k)));
    }
    let mut best = (f64::INFINITY, grid[0]);
    for &beta in grid {
        let v = objective(toy, xs, zs, beta)?;
        if v < best.0 {
            best = (v, beta);
        }
    }
    Ok(best.1)
}

/// Evenly spaced grid `lo, lo + step, …` up to and including `hi`.
pub fn beta_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_large_exponents() {
        assert!(PolynomialToyModel::new(1.0, 9, 1).is_err());
        assert!(PolynomialToyModel::new(1.0, 2, 8).is_ok());
    }

    #[test]
    fn constant_x_is_flat() {
        let toy = PolynomialToyModel::new(1.0, 1, 1).unwrap();
        let r = optimal_beta(&toy, &[2.0, 2.0, 2.0], &[0.0, 1.0, 1.0], &[0.0, 0.5, 1.0]);
        assert!(matches!(r, Err(Error::FlatObjective(_))));
    }

    #[test]
    fn grid_includes_endpoints() {
        let g = beta_grid(-1.0, 1.0, 0.25);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], -1.0);
        assert!((g[8] - 1.0).abs() < 1e-15);
    }

    /// Pooled objective built straight from coalition values by enumerating
    /// every (row, baseline row, independent Z row) triple.
    fn brute_objective(toy: &PolynomialToyModel, xs: &[f64], zs: &[f64], beta: f64) -> f64 {
        let n = xs.len();
        let nf = n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let mut target = 0.0;
            for &z2 in zs {
                let mut phi = 0.0;
                for b in 0..n {
                    let (xb, zb) = (xs[b], zs[b]);
                    let v0 = toy.eval(xb, zb);
                    let vx = toy.eval(xs[i], zb);
                    let vz = toy.eval(xb, z2);
                    let vxz = toy.eval(xs[i], z2);
                    phi += 0.5 * ((vx - v0) + (vxz - vz));
                }
                target += phi / nf;
            }
            target /= nf;
            let k = toy.k as i32;
            let cand: f64 = xs.iter().map(|xb| beta * (xs[i].powi(k) - xb.powi(k))).sum::<f64>() / nf;
            total += (target - cand).powi(2);
        }
        total / nf
    }

    fn samples() -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.71).sin() * 1.3 + 0.2).collect();
        let zs: Vec<f64> = (0..12).map(|i| (i as f64 * 1.37).cos() + 0.5 * xs[i]).collect();
        (xs, zs)
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let (xs, zs) = samples();
        for (k, l) in [(0, 1), (1, 1), (2, 1), (1, 3), (2, 2)] {
            let toy = PolynomialToyModel::new(1.7, k, l).unwrap();
            for beta in [-1.0, 0.0, 0.4, 2.5] {
                let a = objective(&toy, &xs, &zs, beta).unwrap();
                let b = brute_objective(&toy, &xs, &zs, beta);
                assert!((a - b).abs() < 1e-10 * (1.0 + b), "k={k} l={l} beta={beta}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn minimizer_is_the_marginal_mixture() {
        let (xs, zs) = samples();
        let grid = beta_grid(-3.0, 3.0, 1e-3);
        for (k, l) in [(1, 1), (2, 2), (3, 1), (1, 4)] {
            let toy = PolynomialToyModel::new(0.9, k, l).unwrap();
            let best = optimal_beta(&toy, &xs, &zs, &grid).unwrap();
            assert!((best - toy.marginal_beta(&zs)).abs() <= 5e-4 + 1e-12, "k={k} l={l}");
        }
    }

    #[test]
    fn uniform_unit_interval_gives_half() {
        let n = 2001;
        let zs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let xs: Vec<f64> = zs.iter().map(|z| 2.0 * z - 0.3).collect();
        let toy = PolynomialToyModel::new(1.0, 1, 1).unwrap();
        let best = optimal_beta(&toy, &xs, &zs, &beta_grid(0.0, 1.0, 1e-3)).unwrap();
        assert!((best - 0.5).abs() < 1e-3);
    }

    #[test]
    fn objective_is_convex_in_beta() {
        let (xs, zs) = samples();
        let toy = PolynomialToyModel::new(1.0, 2, 1).unwrap();
        let f = |b: f64| objective(&toy, &xs, &zs, b).unwrap();
        for b in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            assert!(f(b - 0.1) + f(b + 0.1) - 2.0 * f(b) >= -1e-12);
        }
    }
}
