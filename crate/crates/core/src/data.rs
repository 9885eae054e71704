use ndarray::{Array1, Array2, Axis};

use crate::error::{check_len, CateError, Result};

/// Observed sample: covariates, binary treatment and outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    /// Treatment indicator stored as 0.0 / 1.0.
    pub d: Array1<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, d: Array1<f64>, y: Array1<f64>) -> Result<Self> {
        check_len(x.nrows(), d.len())?;
        check_len(x.nrows(), y.len())?;
        if d.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(CateError::InvalidParameter("treatment must be 0 or 1".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CateError::NonFinite("covariates"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(CateError::NonFinite("outcome"));
        }
        Ok(Dataset { x, d, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            d: self.d.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }

    /// Row indices (into `rows`) that have the given treatment status.
    pub fn rows_with_treatment(&self, rows: &[usize], treated: bool) -> Vec<usize> {
        let target = if treated { 1.0 } else { 0.0 };
        rows.iter().copied().filter(|&i| self.d[i] == target).collect()
    }

    pub fn treated_count(&self) -> usize {
        self.d.iter().filter(|&&v| v == 1.0).count()
    }
}
