//! L1-penalized least squares by cyclic coordinate descent on the Gram
//! matrix, with the penalty chosen by K-fold cross-validation over a
//! log-spaced grid.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::canonical_order;
use super::linear::{is_constant, LinearModel};
use crate::error::{CateError, Result};
use crate::splitter::make_folds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub n_lambdas: usize,
    /// Smallest grid value as a fraction of the largest; defaults to 1e-4
    /// when n > p and 1e-2 otherwise.
    pub lambda_min_ratio: Option<f64>,
    pub cv_folds: usize,
    /// Explicit penalty grid (strictly decreasing) overriding the automatic one.
    pub lambda_grid: Option<Vec<f64>>,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            n_lambdas: 50,
            lambda_min_ratio: None,
            cv_folds: 5,
            lambda_grid: None,
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }
}

impl LassoParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CateError::InvalidParameter(format!("lasso: {m}")));
        if self.n_lambdas == 0 {
            return bad("n_lambdas must be positive");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if let Some(r) = self.lambda_min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return bad("lambda_min_ratio must lie in (0, 1)");
            }
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return bad("lambda grid must be non-empty, finite and non-negative");
            }
            if grid.windows(2).any(|w| w[1] >= w[0]) {
                return bad("lambda grid must be strictly decreasing");
            }
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return bad("tol and max_sweeps must be positive");
        }
        Ok(())
    }
}

pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimize `0.5 b'Gb - c'b + lambda |b|_1` in place. Returns the number of
/// sweeps used. Coordinates with `G_jj = 0` are held at zero.
fn cd_gram(
    g: &Array2<f64>,
    c: &Array1<f64>,
    lambda: f64,
    beta: &mut Array1<f64>,
    tol: f64,
    max_sweeps: usize,
) -> usize {
    let p = c.len();
    let mut q = g.dot(&*beta);
    for sweep in 1..=max_sweeps {
        for j in 0..p {
            let gjj = g[[j, j]];
            if gjj <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let old = beta[j];
            let r = c[j] - (q[j] - gjj * old);
            let new = soft_threshold(r, lambda) / gjj;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                q.scaled_add(delta, &g.column(j));
            }
        }
        let violation = (0..p)
            .filter(|&j| g[[j, j]] > 0.0)
            .map(|j| kkt_violation(q[j] - c[j], beta[j], lambda))
            .fold(0.0, f64::max);
        if violation <= tol {
            return sweep;
        }
    }
    max_sweeps
}

fn kkt_violation(gradient: f64, beta: f64, lambda: f64) -> f64 {
    if beta == 0.0 {
        (gradient.abs() - lambda).max(0.0)
    } else {
        (gradient + lambda * beta.signum()).abs()
    }
}

/// Solve `min_b 0.5 ||y - X b||^2 + lambda ||b||_1` (no intercept, raw
/// columns).
pub fn l1_coordinate_descent(x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<Array1<f64>> {
    if x.nrows() != y.len() {
        return Err(CateError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) || !lambda.is_finite() || lambda < 0.0 {
        return Err(CateError::NonFinite("lasso inputs"));
    }
    let g = x.t().dot(&x);
    let c = x.t().dot(&y);
    let scale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut beta = Array1::zeros(x.ncols());
    cd_gram(&g, &c, lambda, &mut beta, 1e-13 * scale, 1_000_000);
    Ok(beta)
}

/// Largest violation of the lasso optimality conditions for
/// `0.5 ||y - X b||^2 + lambda ||b||_1`.
pub fn stationarity_violation(x: ArrayView2<f64>, y: ArrayView1<f64>, beta: ArrayView1<f64>, lambda: f64) -> f64 {
    let resid = &y - &x.dot(&beta);
    let grad = -x.t().dot(&resid);
    grad.iter()
        .zip(beta.iter())
        .map(|(g, b)| kkt_violation(*g, *b, lambda))
        .fold(0.0, f64::max)
}

/// Weighted raw moments of shifted data, additive over row subsets.
#[derive(Clone)]
struct Moments {
    sw: f64,
    sx: Array1<f64>,
    sy: f64,
    sxx: Array2<f64>,
    sxy: Array1<f64>,
}

impl Moments {
    fn accumulate(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>, rows: &[usize]) -> Self {
        let xs = x.select(Axis(0), rows);
        let ys = y.select(Axis(0), rows);
        let ws = w.select(Axis(0), rows);
        let xw = &xs * &ws.view().insert_axis(Axis(1));
        Self {
            sw: ws.sum(),
            sx: xw.sum_axis(Axis(0)),
            sy: ys.dot(&ws),
            sxx: xw.t().dot(&xs),
            sxy: xw.t().dot(&ys),
        }
    }

    fn minus(&self, other: &Moments) -> Moments {
        Moments {
            sw: self.sw - other.sw,
            sx: &self.sx - &other.sx,
            sy: self.sy - other.sy,
            sxx: &self.sxx - &other.sxx,
            sxy: &self.sxy - &other.sxy,
        }
    }

    fn standardize(&self) -> Standardized {
        let p = self.sx.len();
        let x_mean = &self.sx / self.sw;
        let y_mean = self.sy / self.sw;
        let mut sd = Array1::zeros(p);
        for j in 0..p {
            let var = self.sxx[[j, j]] / self.sw - x_mean[j] * x_mean[j];
            let s = var.max(0.0).sqrt();
            sd[j] = if is_constant(s, x_mean[j]) { 0.0 } else { s };
        }
        let mut g = Array2::zeros((p, p));
        let mut c = Array1::zeros(p);
        for j in 0..p {
            if sd[j] == 0.0 {
                continue;
            }
            c[j] = (self.sxy[j] / self.sw - x_mean[j] * y_mean) / sd[j];
            for k in 0..p {
                if sd[k] == 0.0 {
                    continue;
                }
                g[[j, k]] = (self.sxx[[j, k]] / self.sw - x_mean[j] * x_mean[k]) / (sd[j] * sd[k]);
            }
            g[[j, j]] = 1.0;
        }
        Standardized {
            x_mean,
            sd,
            y_mean,
            g,
            c,
        }
    }
}

struct Standardized {
    x_mean: Array1<f64>,
    sd: Array1<f64>,
    y_mean: f64,
    g: Array2<f64>,
    c: Array1<f64>,
}

impl Standardized {
    /// Model on the shifted scale.
    fn to_model(&self, beta: &Array1<f64>) -> LinearModel {
        let coef = Array1::from_shape_fn(
            beta.len(),
            |j| {
                if self.sd[j] > 0.0 {
                    beta[j] / self.sd[j]
                } else {
                    0.0
                }
            },
        );
        let intercept = self.y_mean - coef.dot(&self.x_mean);
        LinearModel { intercept, coef }
    }
}

fn lambda_grid(params: &LassoParams, lambda_max: f64, n: usize, p: usize) -> Vec<f64> {
    if let Some(grid) = &params.lambda_grid {
        return grid.clone();
    }
    let ratio = params.lambda_min_ratio.unwrap_or(if n > p { 1e-4 } else { 1e-2 });
    let k = params.n_lambdas;
    if k == 1 {
        return vec![lambda_max];
    }
    (0..k)
        .map(|i| lambda_max * ratio.powf(i as f64 / (k - 1) as f64))
        .collect()
}

fn fit_path(st: &Standardized, grid: &[f64], params: &LassoParams) -> Vec<Array1<f64>> {
    let mut beta = Array1::zeros(st.c.len());
    grid.iter()
        .map(|&lambda| {
            cd_gram(&st.g, &st.c, lambda, &mut beta, params.tol, params.max_sweeps);
            beta.clone()
        })
        .collect()
}

/// Lasso on standardized columns with weighted loss
/// `(1 / 2 sum w) sum w_i (y_i - a - x_i b)^2 + lambda |b_std|_1`.
pub(crate) fn fit_lasso(
    params: &LassoParams,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    seed: u64,
) -> Result<LinearModel> {
    let order = canonical_order(x, y, w);
    let n = x.nrows();
    let p = x.ncols();
    let sw = w.sum();
    let x_shift = x.t().dot(&w) / sw;
    let y_shift = y.dot(&w) / sw;
    let xs = x.select(Axis(0), &order) - &x_shift;
    let ys = y.select(Axis(0), &order) - y_shift;
    let ws = w.select(Axis(0), &order);

    let all: Vec<usize> = (0..n).collect();
    let total = Moments::accumulate(&xs, &ys, &ws, &all);
    let full = total.standardize();
    let lambda_max = full.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let grid = lambda_grid(params, lambda_max, n, p);

    let folds = params.cv_folds.min(n);
    let chosen = if grid.len() == 1 || folds < 2 {
        grid.len() - 1
    } else {
        let plan = make_folds(n, folds, seed)?;
        let mut cv_err = vec![0.0; grid.len()];
        for f in 0..folds {
            let held = plan.fold_rows(f);
            let held_m = Moments::accumulate(&xs, &ys, &ws, &held);
            let train = total.minus(&held_m);
            if !(train.sw > 0.0) {
                continue;
            }
            let st = train.standardize();
            let xh = xs.select(Axis(0), &held);
            let path = fit_path(&st, &grid, params);
            for (l, beta) in path.iter().enumerate() {
                let pred = st.to_model(beta).predict(xh.view());
                cv_err[l] += held
                    .iter()
                    .zip(pred.iter())
                    .map(|(&i, pr)| ws[i] * (ys[i] - pr).powi(2))
                    .sum::<f64>();
            }
        }
        cv_err
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |(bi, be), (i, &e)| if e < be { (i, e) } else { (bi, be) },
            )
            .0
    };

    let path = fit_path(&full, &grid[..=chosen], params);
    let shifted = full.to_model(&path[chosen]);
    let intercept = shifted.intercept + y_shift - shifted.coef.dot(&x_shift);
    Ok(LinearModel {
        intercept,
        coef: shifted.coef,
    })
}
