mod common;

use mimfair_core::model::{cross_entropy, evaluate, sigmoid, train_logistic, train_logistic_traced};
use mimfair_core::synth::{make_scenario, train_test_split};
use mimfair_core::{Dataset, LinearLogisticModel, Scenario, ScenarioConfig, TrainConfig};
use proptest::prelude::*;

/// Reference maximum-likelihood fit by Newton's method on all columns.
fn newton_fit(data: &Dataset) -> LinearLogisticModel {
    let d = data.n_cols() + 1;
    let mut beta = vec![0.0; d];
    let aug = |row: &[f64]| {
        let mut v = row.to_vec();
        v.push(1.0);
        v
    };
    for _ in 0..50 {
        let mut grad = vec![0.0; d];
        let mut hess = vec![vec![0.0; d]; d];
        for (row, &y) in data.rows().zip(data.labels()) {
            let x = aug(row);
            let p = sigmoid(x.iter().zip(&beta).map(|(a, b)| a * b).sum());
            for a in 0..d {
                grad[a] += (p - f64::from(y)) * x[a];
                for b in 0..d {
                    hess[a][b] += p * (1.0 - p) * x[a] * x[b];
                }
            }
        }
        // Solve hess · step = grad by Gaussian elimination.
        let mut m: Vec<Vec<f64>> = hess.iter().zip(&grad).map(|(h, &g)| [h.clone(), vec![g]].concat()).collect();
        for c in 0..d {
            let p = (c..d).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, p);
            for r in 0..d {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=d {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        let step: Vec<f64> = (0..d).map(|c| m[c][d] / m[c][c]).collect();
        beta.iter_mut().zip(&step).for_each(|(b, s)| *b -= s);
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-12 {
            break;
        }
    }
    let bias = beta.pop().unwrap();
    LinearLogisticModel::dense(beta, bias).unwrap()
}

fn sweep_training() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        epochs: 300,
        ..TrainConfig::default()
    }
}

#[test]
fn scenario_a_recovers_generating_coefficients() {
    let data = make_scenario(&ScenarioConfig::new(Scenario::A, 0.0, 100_000, 1)).unwrap();
    let model = train_logistic(&data, &sweep_training(), &[0, 1, 2]).unwrap();
    let got = [model.weights()[0], model.weights()[1], model.weights()[2], model.bias()];
    for v in got {
        assert!((v - 1.0).abs() <= 0.15, "{got:?}");
    }
}

#[test]
fn accuracy_matches_reference_solver() {
    let data = make_scenario(&ScenarioConfig::new(Scenario::A, 0.5, 5000, 2)).unwrap();
    let (train, test) = train_test_split(&data, 0.2, 2).unwrap();
    let ours = train_logistic(&train, &sweep_training(), &[0, 1, 2]).unwrap();
    let reference = newton_fit(&train);
    let a = evaluate(&ours, &test, 0.5).unwrap();
    let b = evaluate(&reference, &test, 0.5).unwrap();
    assert!((a.accuracy - b.accuracy).abs() <= 0.01, "{a:?} vs {b:?}");
    // ADAM stops short of the optimum but not by much.
    assert!(cross_entropy(&ours, &train) - cross_entropy(&reference, &train) < 1e-3);
}

#[test]
fn full_batch_loss_is_monotone() {
    let data = make_scenario(&ScenarioConfig::new(Scenario::A, 0.8, 2000, 3)).unwrap();
    let cfg = TrainConfig::default();
    let (_, history) = train_logistic_traced(&data, &cfg, &[0, 1, 2]).unwrap();
    for w in history.windows(2) {
        assert!(w[1] <= w[0] + 1e-6, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn minibatch_training_is_deterministic() {
    let data = make_scenario(&ScenarioConfig::new(Scenario::A, 0.3, 1000, 4)).unwrap();
    let cfg = TrainConfig {
        batch_size: Some(64),
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train_logistic(&data, &cfg, &[0, 1]).unwrap();
    let b = train_logistic(&data, &cfg, &[0, 1]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.weights()[2], 0.0);
    assert!(!a.is_active(2));
}

#[test]
fn serialized_model_round_trips_exactly() {
    let data = make_scenario(&ScenarioConfig::new(Scenario::B, 0.2, 500, 5)).unwrap();
    let model = train_logistic(&data, &TrainConfig::default(), &[0, 1]).unwrap();
    let back = LinearLogisticModel::from_text(&model.to_text()).unwrap();
    assert_eq!(model, back);
}

proptest! {
    #[test]
    fn probability_is_monotone_in_positive_weights(
        w in prop::collection::vec(0.01..3.0f64, 3),
        bias in -2.0..2.0f64,
        x in prop::collection::vec(-10.0..10.0f64, 3),
        j in 0usize..3,
        bump in 0.0..5.0f64,
    ) {
        let model = LinearLogisticModel::dense(w, bias).unwrap();
        let mut hi = x.clone();
        hi[j] += bump;
        let (p, q) = (model.predict_proba(&x).unwrap(), model.predict_proba(&hi).unwrap());
        prop_assert!(q >= p);
        prop_assert!(p > 0.0 && p < 1.0);
    }
}
