//! Shared inputs for the benchmarks under `benches/`.

use mimfair_core::model::train_logistic;
use mimfair_core::synth::make_scenario;
use mimfair_core::{Dataset, LinearLogisticModel, Scenario, ScenarioConfig, TrainConfig};

pub fn scenario_a(r: f64, n: usize) -> Dataset {
    make_scenario(&ScenarioConfig::new(Scenario::A, r, n, 17)).expect("admissible scenario")
}

/// Full-feature model with the sweep's training settings.
pub fn reference_model(data: &Dataset) -> LinearLogisticModel {
    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 300,
        ..TrainConfig::default()
    };
    let all: Vec<usize> = (0..data.n_cols()).collect();
    train_logistic(data, &cfg, &all).expect("training succeeds")
}
