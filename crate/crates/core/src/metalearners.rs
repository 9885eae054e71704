//! Pseudo-outcomes and row weights for the T-, DR-, R- and X-learner, and
//! the weighted final-stage regression.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::ensemble::{fit_stack, LearnerConfig, StackedModel};
use crate::error::{check_len, CateError, Result};
use crate::learners::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaLearner {
    T,
    Dr,
    R,
    X,
}

impl MetaLearner {
    pub const ALL: [MetaLearner; 4] = [MetaLearner::T, MetaLearner::Dr, MetaLearner::R, MetaLearner::X];

    pub fn id(self) -> &'static str {
        match self {
            MetaLearner::T => "t",
            MetaLearner::Dr => "dr",
            MetaLearner::R => "r",
            MetaLearner::X => "x",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MetaLearner::T => "T-learner",
            MetaLearner::Dr => "DR-learner",
            MetaLearner::R => "R-learner",
            MetaLearner::X => "X-learner",
        }
    }

    /// Whether the learner needs a propensity model.
    pub fn needs_propensity(self) -> bool {
        !matches!(self, MetaLearner::T)
    }
}

impl fmt::Display for MetaLearner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MetaLearner {
    type Err = CateError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_suffix("-learner").unwrap_or(&key);
        MetaLearner::ALL
            .into_iter()
            .find(|m| m.id() == key)
            .ok_or_else(|| CateError::InvalidParameter(format!("unknown meta-learner `{s}`")))
    }
}

/// Nuisance predictions on the estimation rows. Fields a learner does not
/// use are `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NuisancePredictions {
    pub mu0: Option<Array1<f64>>,
    pub mu1: Option<Array1<f64>>,
    pub mu: Option<Array1<f64>>,
    pub e: Option<Array1<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Treated,
    Control,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoOutcome {
    pub psi: Array1<f64>,
    pub weights: Array1<f64>,
    /// Positions in the input vectors that `psi` refers to.
    pub rows: Vec<usize>,
    pub group: Option<Group>,
}

impl PseudoOutcome {
    fn full(psi: Array1<f64>, weights: Array1<f64>) -> Result<Self> {
        if psi.iter().chain(weights.iter()).any(|v| !v.is_finite()) {
            return Err(CateError::NonFinite("pseudo-outcome"));
        }
        let rows = (0..psi.len()).collect();
        Ok(Self {
            psi,
            weights,
            rows,
            group: None,
        })
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

fn check_propensity(e: ArrayView1<f64>) -> Result<()> {
    match e.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        Some(&value) => Err(CateError::InvalidProbability { value }),
        None => Ok(()),
    }
}

pub fn pseudo_t(mu0: ArrayView1<f64>, mu1: ArrayView1<f64>) -> Result<PseudoOutcome> {
    check_len(mu0.len(), mu1.len())?;
    PseudoOutcome::full(&mu1 - &mu0, Array1::ones(mu0.len()))
}

pub fn pseudo_dr(
    y: ArrayView1<f64>,
    d: ArrayView1<f64>,
    mu0: ArrayView1<f64>,
    mu1: ArrayView1<f64>,
    e: ArrayView1<f64>,
) -> Result<PseudoOutcome> {
    let n = y.len();
    for len in [d.len(), mu0.len(), mu1.len(), e.len()] {
        check_len(n, len)?;
    }
    check_propensity(e)?;
    let psi = Array1::from_shape_fn(n, |i| {
        let t = mu1[i] - mu0[i];
        if d[i] == 1.0 {
            t + (y[i] - mu1[i]) / e[i]
        } else {
            t - (y[i] - mu0[i]) / (1.0 - e[i])
        }
    });
    PseudoOutcome::full(psi, Array1::ones(n))
}

pub fn pseudo_r(
    y: ArrayView1<f64>,
    d: ArrayView1<f64>,
    mu: ArrayView1<f64>,
    e: ArrayView1<f64>,
) -> Result<PseudoOutcome> {
    let n = y.len();
    for len in [d.len(), mu.len(), e.len()] {
        check_len(n, len)?;
    }
    check_propensity(e)?;
    let resid_d = &d - &e;
    let psi = Array1::from_shape_fn(n, |i| (y[i] - mu[i]) / resid_d[i]);
    PseudoOutcome::full(psi, resid_d.mapv(|r| r * r))
}

/// Imputed effects `y - mu0` on treated rows and `mu1 - y` on control rows.
pub fn pseudo_x(
    y: ArrayView1<f64>,
    d: ArrayView1<f64>,
    mu0: ArrayView1<f64>,
    mu1: ArrayView1<f64>,
) -> Result<(PseudoOutcome, PseudoOutcome)> {
    let n = y.len();
    for len in [d.len(), mu0.len(), mu1.len()] {
        check_len(n, len)?;
    }
    let treated: Vec<usize> = (0..n).filter(|&i| d[i] == 1.0).collect();
    let control: Vec<usize> = (0..n).filter(|&i| d[i] != 1.0).collect();
    if treated.is_empty() {
        return Err(CateError::DegenerateGroup("treated"));
    }
    if control.is_empty() {
        return Err(CateError::DegenerateGroup("control"));
    }
    let build = |rows: Vec<usize>, group: Group| -> Result<PseudoOutcome> {
        let psi: Array1<f64> = rows
            .iter()
            .map(|&i| match group {
                Group::Treated => y[i] - mu0[i],
                Group::Control => mu1[i] - y[i],
            })
            .collect();
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(CateError::NonFinite("pseudo-outcome"));
        }
        Ok(PseudoOutcome {
            weights: Array1::ones(psi.len()),
            psi,
            rows,
            group: Some(group),
        })
    };
    Ok((build(treated, Group::Treated)?, build(control, Group::Control)?))
}

/// `g * tau0 + (1 - g) * tau1`.
pub fn blend_x(tau0: ArrayView1<f64>, tau1: ArrayView1<f64>, g: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len(tau0.len(), tau1.len())?;
    check_len(tau0.len(), g.len())?;
    if let Some(&value) = g.iter().find(|&&v| !(0.0..=1.0).contains(&v)) {
        return Err(CateError::InvalidProbability { value });
    }
    Ok(Array1::from_shape_fn(tau0.len(), |i| {
        g[i] * tau0[i] + (1.0 - g[i]) * tau1[i]
    }))
}

/// Weighted stacked regression of `psi` on the covariates of its rows.
/// `x` holds the rows the pseudo-outcome was computed on, in input order.
pub fn final_stage(psi: &PseudoOutcome, x: ArrayView2<f64>, config: &LearnerConfig, seed: u64) -> Result<StackedModel> {
    if psi.is_empty() {
        return Err(CateError::EmptyData("pseudo-outcome"));
    }
    let xs = if psi.rows.len() == x.nrows() && psi.rows.iter().enumerate().all(|(i, &r)| i == r) {
        x.to_owned()
    } else {
        x.select(Axis(0), &psi.rows)
    };
    let weights = (!psi.weights.iter().all(|&w| w == 1.0)).then_some(psi.weights.view());
    fit_stack(
        &config.effective_candidates(),
        xs.view(),
        psi.psi.view(),
        weights,
        Task::Regression,
        seed,
    )
}
