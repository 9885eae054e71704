//! Shared fixtures for the benchmarks in `benches/`.

use cate_core::dgp::{Scenario, ScenarioFrame, SimulatedData};
use cate_core::Dataset;
use ndarray::Array1;

/// Scenario frame with a small test set and one training draw.
pub fn fixture(id: &str, n: usize) -> (ScenarioFrame, SimulatedData) {
    let frame = ScenarioFrame::new(&Scenario {
        n,
        test_size: 500,
        ..Scenario::catalog(id).expect("catalog scenario")
    })
    .expect("valid scenario");
    let train = frame.draw_train(1).expect("training draw");
    (frame, train)
}

/// Regression target `y` with the treatment indicator as a binary target.
pub fn targets(data: &Dataset) -> (Array1<f64>, Array1<f64>) {
    (data.y.clone(), data.d.clone())
}
