#![allow(dead_code)]

use cate_core::seed;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut m = a.clone();
    let mut v = b.clone();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                m.swap([col, k], [pivot, k]);
            }
            v.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = m[[row, col]] / m[[col, col]];
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[[row, k]] * x[k]).sum();
        x[row] = (v[row] - s) / m[[row, row]];
    }
    x
}

/// Weighted least squares with an intercept column prepended; returns
/// `(intercept, slopes)`.
pub fn weighted_ols(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>) -> (f64, Array1<f64>) {
    let (n, p) = x.dim();
    let mut design = Array2::ones((n, p + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(x);
    let mut xtwx = Array2::zeros((p + 1, p + 1));
    let mut xtwy = Array1::zeros(p + 1);
    for i in 0..n {
        for a in 0..=p {
            xtwy[a] += w[i] * design[[i, a]] * y[i];
            for b in 0..=p {
                xtwx[[a, b]] += w[i] * design[[i, a]] * design[[i, b]];
            }
        }
    }
    let beta = solve(&xtwx, &xtwy);
    (beta[0], beta.slice(ndarray::s![1..]).to_owned())
}

/// `n x p` matrix with orthonormal columns (modified Gram-Schmidt).
pub fn orthonormal_design(n: usize, p: usize, seed_: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed_);
    let mut q: Array2<f64> = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
    for j in 0..p {
        for k in 0..j {
            let proj = q.column(j).dot(&q.column(k));
            let ck = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &ck);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

pub fn gaussian(n: usize, p: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| StandardNormal.sample(rng))
}

/// Least-squares slope of `y` on `x` with intercept.
pub fn slope(x: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let mx = x.mean().unwrap();
    let my = y.mean().unwrap();
    let cov: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}
