#![allow(dead_code)]

use mimfair_core::{Dataset, Predictor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` rows of `d` uniform values in `[-2, 2)`, last column binary
/// (and protected when `d > 1`).
pub fn random_data(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            row[d - 1] = f64::from(u8::from(r.random::<bool>()));
            row
        })
        .collect();
    let labels = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
    let names = (0..d).map(|j| format!("f{j}")).collect();
    let protected = if d > 1 { vec![d - 1] } else { vec![] };
    Dataset::new(names, rows, labels, protected).unwrap()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Coalition value: mean over baseline rows with the features in `kept`
/// taken from `w`.
pub fn coalition_value<P: Predictor>(model: &P, w: &[f64], kept: u32, baseline: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for b in baseline {
        let point: Vec<f64> = (0..w.len())
            .map(|j| if kept >> j & 1 == 1 { w[j] } else { b[j] })
            .collect();
        total += model.predict(&point);
    }
    total / baseline.len() as f64
}

/// Shapley value of feature `i` from the factorial formula over all subsets.
pub fn brute_shap<P: Predictor>(model: &P, w: &[f64], i: usize, baseline: &[Vec<f64>]) -> f64 {
    let d = w.len();
    let mut phi = 0.0;
    for s in 0u32..(1 << d) {
        if s >> i & 1 == 1 {
            continue;
        }
        let size = s.count_ones() as usize;
        let weight = factorial(size) * factorial(d - size - 1) / factorial(d);
        phi += weight * (coalition_value(model, w, s | 1 << i, baseline) - coalition_value(model, w, s, baseline));
    }
    phi
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
