use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::Result;

/// Affine predictor `intercept + x . coef`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Array1<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.coef) + self.intercept
    }
}

/// Weighted column means, standard deviations and the centered data.
pub(crate) struct Centered {
    pub x_mean: Array1<f64>,
    pub x_sd: Array1<f64>,
    pub y_mean: f64,
}

pub(crate) fn center(x: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> Centered {
    let sw = w.sum();
    let x_mean = x.t().dot(&w) / sw;
    let y_mean = y.dot(&w) / sw;
    let mut x_sd = Array1::zeros(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let m = x_mean[j];
        let var = col
            .iter()
            .zip(w.iter())
            .map(|(v, wi)| wi * (v - m) * (v - m))
            .sum::<f64>()
            / sw;
        x_sd[j] = var.sqrt();
    }
    Centered { x_mean, x_sd, y_mean }
}

/// Columns whose spread is indistinguishable from zero get coefficient 0.
pub(crate) fn is_constant(sd: f64, mean: f64) -> bool {
    !(sd > 1e-10 * (1.0 + mean.abs()))
}

/// Weighted least squares with intercept.
pub(crate) fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> Result<LinearModel> {
    let c = center(x, y, w);
    let active: Vec<usize> = (0..x.ncols())
        .filter(|&j| !is_constant(c.x_sd[j], c.x_mean[j]))
        .collect();
    let mut coef = Array1::zeros(x.ncols());
    if !active.is_empty() {
        let k = active.len();
        let n = x.nrows();
        // Standardized, sqrt-weighted design.
        let sqrt_w = w.mapv(f64::sqrt);
        let mut z = Array2::zeros((n, k));
        for (a, &j) in active.iter().enumerate() {
            let (m, s) = (c.x_mean[j], c.x_sd[j]);
            for i in 0..n {
                z[[i, a]] = sqrt_w[i] * (x[[i, j]] - m) / s;
            }
        }
        let r = (&y - c.y_mean) * &sqrt_w;
        let gram = z.t().dot(&z);
        let rhs = z.t().dot(&r);
        let g = DMatrix::from_fn(k, k, |i, j| gram[[i, j]]);
        let b = DVector::from_fn(k, |i, _| rhs[i]);
        let beta = match g.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => g.svd(true, true).solve(&b, 1e-12).unwrap_or_else(|_| DVector::zeros(k)),
        };
        for (a, &j) in active.iter().enumerate() {
            coef[j] = beta[a] / c.x_sd[j];
        }
    }
    let intercept = c.y_mean - coef.dot(&c.x_mean);
    Ok(LinearModel { intercept, coef })
}
