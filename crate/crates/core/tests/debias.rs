mod common;

use mimfair_core::debias::{
    influence_preservation_loss, interventional_mixture, mim, nested_removal, opt_fit, DynPredictor, Granularity,
    LossConfig, OptConfig, PipelineStage,
};
use mimfair_core::model::{sigmoid, train_logistic};
use mimfair_core::pscf::{build_mim_predictor, simulate_scm, LinearSCM};
use mimfair_core::synth::make_scenario;
use mimfair_core::{
    Dataset, Error, FnPredictor, LinearLogisticModel, LinearPredictor, Measure, Predictor, Scenario, ScenarioConfig,
    TrainConfig,
};
use proptest::prelude::*;

fn sweep_training() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        epochs: 300,
        ..TrainConfig::default()
    }
}

fn scenario(r: f64, n: usize, seed: u64) -> Dataset {
    make_scenario(&ScenarioConfig::new(Scenario::A, r, n, seed)).unwrap()
}

#[test]
fn mixture_examples() {
    let data = scenario(0.3, 200, 1);
    let no_z = LinearLogisticModel::dense(vec![0.4, -0.9, 0.0], 0.2).unwrap();
    let mixed = mim(no_z.clone(), &data).unwrap();
    for row in data.rows() {
        assert!((mixed.predict(row) - no_z.predict(row)).abs() < 1e-15);
    }
    let base = FnPredictor::new(2, |r: &[f64]| sigmoid(r[0] + r[1]));
    let sym = interventional_mixture(base, vec![1], vec![vec![-1.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
    assert!((sym.predict(&[0.0, 7.0]) - 0.5).abs() < 1e-15);
    let balanced = Dataset::new(
        vec!["x".into(), "z".into()],
        vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 0.0]],
        vec![0; 4],
        vec![1],
    )
    .unwrap();
    let m = mim(LinearPredictor::new(vec![1.0, 1.0], 0.0), &balanced).unwrap();
    assert_eq!(m.weights(), [0.5, 0.5]);
}

#[test]
fn mim_of_loan_model_uses_the_mean() {
    // y = 3 − x1 − z on data with z̄ = 1/3.
    let rows: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.5, f64::from(u8::from(i % 3 == 0))]).collect();
    let data = Dataset::new(vec!["x1".into(), "z".into()], rows, vec![0; 9], vec![1]).unwrap();
    let m = mim(LinearPredictor::new(vec![-1.0, -1.0], 3.0), &data).unwrap();
    for x1 in [-2.0, 0.0, 1.5] {
        for z in [0.0, 1.0] {
            assert!((m.predict(&[x1, z]) - (3.0 - x1 - 1.0 / 3.0)).abs() < 1e-15);
        }
    }
}

#[test]
fn mim_has_zero_pooled_mde_loss() {
    for r in [0.0, 0.4, 0.8] {
        let data = scenario(r, 4000, 2);
        let full = train_logistic(&data, &sweep_training(), &[0, 1, 2]).unwrap();
        let m = mim(full.clone(), &data).unwrap();
        let cfg = LossConfig::new(Measure::Mde, Granularity::Pooled).with_seed(3);
        let loss = influence_preservation_loss(&m, &full, &data, &cfg).unwrap();
        assert!(loss.value <= (4.0 * loss.stderr).max(1e-24), "r={r}: {loss}");
    }
}

#[test]
fn frozen_mean_linear_candidate_has_zero_loss() {
    let data = scenario(0.6, 1000, 4);
    let reference = LinearPredictor::new(vec![0.8, -0.5, 1.2], 0.3);
    let z_mean = common::mean(&data.column(2));
    let frozen = LinearPredictor::new(vec![0.8, -0.5, 0.0], 0.3 + 1.2 * z_mean);
    for measure in [Measure::Mde, Measure::Shap] {
        for granularity in [Granularity::Pooled, Granularity::PerFeature] {
            let cfg = LossConfig::new(measure, granularity).with_seed(1);
            let loss = influence_preservation_loss(&frozen, &reference, &data, &cfg).unwrap();
            assert!(loss.value < 1e-24, "{measure:?} {granularity:?}: {loss}");
        }
    }
}

#[test]
fn trad_without_z_loses_more_than_mim() {
    let data = scenario(0.8, 4000, 5);
    let full = train_logistic(&data, &sweep_training(), &[0, 1, 2]).unwrap();
    let wo_z = train_logistic(&data, &sweep_training(), &[0, 1]).unwrap();
    let m = mim(full.clone(), &data).unwrap();
    for measure in [Measure::Mde, Measure::Shap] {
        let cfg = LossConfig::new(measure, Granularity::PerFeature).with_seed(6);
        let trad = influence_preservation_loss(&wo_z, &full, &data, &cfg).unwrap();
        let ours = influence_preservation_loss(&m, &full, &data, &cfg).unwrap();
        assert!(trad.value > 0.0);
        assert!(trad.value > ours.value + 4.0 * trad.stderr, "{measure:?}: {trad} vs {ours}");
    }
}

#[test]
fn candidate_reading_z_is_rejected() {
    let data = scenario(0.2, 300, 7);
    let full = LinearLogisticModel::dense(vec![1.0, 1.0, 1.0], 1.0).unwrap();
    let cfg = LossConfig::new(Measure::Mde, Granularity::Pooled);
    assert!(influence_preservation_loss(&full, &full, &data, &cfg).is_err());
}

#[test]
fn opt_leaves_a_z_free_reference_alone() {
    let data = scenario(0.5, 1500, 8);
    let stage1 = TrainConfig::default();
    let reference = train_logistic(&data, &stage1, &[0, 1]).unwrap();
    let cfg = OptConfig {
        stage1,
        ..OptConfig::new(Measure::Shap)
    };
    let fit = opt_fit(&data, &reference, &cfg).unwrap();
    for (a, b) in fit.model.weights().iter().zip(fit.stage1.weights()) {
        assert!((a - b).abs() <= 1e-3);
    }
    assert!((fit.model.bias() - fit.stage1.bias()).abs() <= 1e-3);
}

#[test]
fn opt_mde_recovers_the_mixture_slopes() {
    // The mixture keeps the reference's slopes on X inside each component,
    // so a logistic candidate preserving MDE should land near them, away
    // from the stage-1 slope on X1 that absorbs the missing Z.
    let data = scenario(0.5, 4000, 9);
    let reference = train_logistic(&data, &sweep_training(), &[0, 1, 2]).unwrap();
    let cfg = OptConfig {
        stage1: sweep_training(),
        epochs: 300,
        ..OptConfig::new(Measure::Mde)
    };
    let fit = opt_fit(&data, &reference, &cfg).unwrap();
    assert!(fit.final_loss <= fit.initial_loss);
    assert_eq!(fit.model.weights()[2], 0.0);
    for j in 0..2 {
        let (got, want) = (fit.model.weights()[j], reference.weights()[j]);
        assert!((got - want).abs() <= 0.1, "X{}: {got} vs {want}", j + 1);
    }
    assert!(fit.stage1.weights()[0] - reference.weights()[0] > 0.1);
}

#[test]
fn opt_is_deterministic() {
    let data = scenario(0.4, 800, 11);
    let reference = train_logistic(&data, &TrainConfig::default(), &[0, 1, 2]).unwrap();
    let cfg = OptConfig {
        epochs: 20,
        ..OptConfig::new(Measure::Shap)
    };
    let a = opt_fit(&data, &reference, &cfg).unwrap();
    let b = opt_fit(&data, &reference, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
}

fn boxed<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(dim: usize, f: F) -> DynPredictor {
    Box::new(FnPredictor::new(dim, f))
}

#[test]
fn nested_removal_matches_closed_form_scm_correction() {
    let scm = LinearSCM {
        theta_m: [0.1, 0.3, 0.5],
        theta_l: [-0.2, 0.25, 0.5, 0.4],
        theta_y: [0.3, 0.5, 0.5, 1.0, 0.7],
        noise_std: [1.0, 1.0, 1.0],
        ..LinearSCM::default()
    };
    let sample = simulate_scm(&scm, 500, 3).unwrap();
    let [tm, tm_z, tm_c] = scm.theta_m;
    let [tl, tl_z, tl_c, tl_m] = scm.theta_l;
    let [ty, ty_z, ty_c, ty_m, ty_l] = scm.theta_y;
    // Columns C, M, L, Z, U where U is the abducted noise of M.
    let rows: Vec<Vec<f64>> = (0..sample.len())
        .map(|i| {
            let [c, m, l, z] = sample.row(i);
            vec![c, m, l, z, m - tm - tm_z * z - tm_c * c]
        })
        .collect();
    let names = ["C", "M", "L", "Z", "U"].map(String::from).to_vec();
    let data = Dataset::new(names, rows, vec![0; sample.len()], vec![3]).unwrap();
    let stages = vec![
        PipelineStage::new(2, vec![0, 1, 3], boxed(5, move |r| tl + tl_z * r[3] + tl_c * r[0] + tl_m * r[1]), false),
        PipelineStage::new(1, vec![0, 3, 4], boxed(5, move |r| tm + tm_z * r[3] + tm_c * r[0] + r[4]), true),
    ];
    let y = boxed(5, move |r| ty + ty_z * r[3] + ty_c * r[0] + ty_m * r[1] + ty_l * r[2]);
    let nested = nested_removal(stages, y, &data).unwrap();
    assert_eq!(nested.order(), [1, 2]);
    let oracle = build_mim_predictor(&scm, common::mean(&sample.z));
    for row in data.rows() {
        let got = nested.predict(row);
        let want = oracle.predict(&row[..4]);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn nested_removal_without_protected_influence_is_the_composite() {
    let data = scenario(0.5, 100, 12);
    // X2 recomputed from X1, final model on (X1, X2); nothing reads Z.
    let stage = PipelineStage::new(1, vec![0], boxed(3, |r| 0.5 * r[0] - 1.0), true);
    let nested = nested_removal(vec![stage], boxed(3, |r| sigmoid(r[0] - 2.0 * r[1])), &data).unwrap();
    for row in data.rows() {
        let x2 = 0.5 * row[0] - 1.0;
        assert_eq!(nested.predict(row), sigmoid(row[0] - 2.0 * x2));
    }
}

#[test]
fn nested_removal_rejects_bad_pipelines() {
    let data = scenario(0.5, 50, 13);
    let rewrite_z = vec![PipelineStage::new(2, vec![0], boxed(3, |r| r[0]), true)];
    assert!(nested_removal(rewrite_z, boxed(3, |r| r[0]), &data).is_err());
    let cycle = vec![
        PipelineStage::new(0, vec![1], boxed(3, |r| r[1]), true),
        PipelineStage::new(1, vec![0], boxed(3, |r| r[0]), true),
    ];
    assert!(matches!(nested_removal(cycle, boxed(3, |r| r[0]), &data), Err(Error::CyclicDependency(_))));
    let wrong_dim = vec![PipelineStage::new(0, vec![], boxed(2, |r| r[0]), true)];
    assert!(nested_removal(wrong_dim, boxed(3, |r| r[0]), &data).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_output_ignores_z(
        w in prop::collection::vec(-3.0..3.0f64, 3),
        bias in -2.0..2.0f64,
        x1 in -4.0..4.0f64,
        x2 in -4.0..4.0f64,
        z in -5.0..5.0f64,
        seed in 0u64..500,
    ) {
        let data = scenario(0.5, 60, seed);
        let m = mim(LinearLogisticModel::dense(w, bias).unwrap(), &data).unwrap();
        prop_assert_eq!(m.predict(&[x1, x2, z]), m.predict(&[x1, x2, 0.0]));
        let total: f64 = m.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
