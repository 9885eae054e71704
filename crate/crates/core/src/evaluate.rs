//! Monte Carlo performance measures: per-row MSE, absolute bias and
//! standard deviation across replications, and their test-set averages.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::engine::median;
use crate::error::{check_len, CateError, Result};

/// Replications (rows) by test points (columns) of predicted effects.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionCube {
    values: Array2<f64>,
    tau_true: Array1<f64>,
}

impl PredictionCube {
    pub fn new(values: Array2<f64>, tau_true: Array1<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(CateError::EmptyData("prediction cube"));
        }
        check_len(values.ncols(), tau_true.len())?;
        if values.iter().chain(tau_true.iter()).any(|v| !v.is_finite()) {
            return Err(CateError::NonFinite("prediction cube"));
        }
        Ok(Self { values, tau_true })
    }

    pub fn from_rows(rows: &[Array1<f64>], tau_true: Array1<f64>) -> Result<Self> {
        let n = tau_true.len();
        let mut values = Array2::zeros((rows.len(), n));
        for (r, row) in rows.iter().enumerate() {
            check_len(n, row.len())?;
            values.row_mut(r).assign(row);
        }
        Self::new(values, tau_true)
    }

    pub fn replications(&self) -> usize {
        self.values.nrows()
    }

    pub fn test_size(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn tau_true(&self) -> ArrayView1<'_, f64> {
        self.tau_true.view()
    }
}

/// How the "median MSE" column reduces the cube.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianMseMode {
    /// Median over replications of each replication's test-set MSE.
    #[default]
    Replications,
    /// Median over test rows of the per-row MSE.
    Rows,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub mean_mse: f64,
    pub mean_abs_bias: f64,
    pub mean_sd: f64,
    pub median_mse: f64,
    pub replications: usize,
    #[serde(skip)]
    pub per_row: Option<PerRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerRow {
    pub mse: Array1<f64>,
    pub abs_bias: Array1<f64>,
    pub sd: Array1<f64>,
}

pub fn mse_per_row(cube: &PredictionCube) -> Array1<f64> {
    let err = &cube.values - &cube.tau_true.view().insert_axis(Axis(0));
    err.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty cube")
}

fn row_means(cube: &PredictionCube) -> Array1<f64> {
    cube.values.mean_axis(Axis(0)).expect("non-empty cube")
}

pub fn abs_bias_per_row(cube: &PredictionCube) -> Array1<f64> {
    (row_means(cube) - &cube.tau_true).mapv(f64::abs)
}

/// Population standard deviation (divisor `R`).
pub fn sd_per_row(cube: &PredictionCube) -> Array1<f64> {
    let mean = row_means(cube);
    let dev = &cube.values - &mean.insert_axis(Axis(0));
    dev.mapv(|v| v * v)
        .mean_axis(Axis(0))
        .expect("non-empty cube")
        .mapv(f64::sqrt)
}

/// Test-set MSE of each replication.
pub fn mse_per_replication(cube: &PredictionCube) -> Array1<f64> {
    let err = &cube.values - &cube.tau_true.view().insert_axis(Axis(0));
    err.mapv(|v| v * v).mean_axis(Axis(1)).expect("non-empty cube")
}

pub fn aggregate(cube: &PredictionCube) -> EvalReport {
    aggregate_with(cube, MedianMseMode::default())
}

pub fn aggregate_with(cube: &PredictionCube, mode: MedianMseMode) -> EvalReport {
    let mse = mse_per_row(cube);
    let abs_bias = abs_bias_per_row(cube);
    let sd = sd_per_row(cube);
    let mut spread = match mode {
        MedianMseMode::Replications => mse_per_replication(cube).to_vec(),
        MedianMseMode::Rows => mse.to_vec(),
    };
    EvalReport {
        mean_mse: mse.mean().unwrap_or(0.0),
        mean_abs_bias: abs_bias.mean().unwrap_or(0.0),
        mean_sd: sd.mean().unwrap_or(0.0),
        median_mse: median(&mut spread),
        replications: cube.replications(),
        per_row: Some(PerRow { mse, abs_bias, sd }),
    }
}
