//! Base learners available to the stacked ensemble: mean, ordinary least
//! squares, lasso, random forest and gradient-boosted trees.
//!
//! Every learner accepts optional non-negative row weights and is
//! deterministic given its spec, data and seed. Probability tasks are fit as
//! regressions on `{0, 1}` and clipped.

mod boosting;
mod forest;
mod lasso;
mod linear;
mod tree;

use std::cmp::Ordering;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CateError, Result};

pub use boosting::{BoostedModel, BoostingParams, EarlyStopping};
pub use forest::{Forest, ForestParams};
pub use lasso::{l1_coordinate_descent, soft_threshold, stationarity_violation, LassoParams};
pub use linear::LinearModel;
pub use tree::Tree;

/// Bounds applied to every estimated probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ClipBounds {
    fn default() -> Self {
        Self { lo: 0.01, hi: 0.99 }
    }
}

impl ClipBounds {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.lo && self.lo < self.hi && self.hi < 1.0 {
            Ok(())
        } else {
            Err(CateError::InvalidParameter(format!(
                "clip bounds must satisfy 0 < lo < hi < 1, got [{}, {}]",
                self.lo, self.hi
            )))
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Task {
    Regression,
    Probability(ClipBounds),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Mean,
    Linear,
    L1Linear,
    RandomForest,
    BoostedTrees,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Mean,
    Linear,
    L1Linear(LassoParams),
    RandomForest(ForestParams),
    BoostedTrees(BoostingParams),
}

impl LearnerSpec {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerSpec::Mean => LearnerKind::Mean,
            LearnerSpec::Linear => LearnerKind::Linear,
            LearnerSpec::L1Linear(_) => LearnerKind::L1Linear,
            LearnerSpec::RandomForest(_) => LearnerKind::RandomForest,
            LearnerSpec::BoostedTrees(_) => LearnerKind::BoostedTrees,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind() {
            LearnerKind::Mean => "mean",
            LearnerKind::Linear => "linear",
            LearnerKind::L1Linear => "lasso",
            LearnerKind::RandomForest => "forest",
            LearnerKind::BoostedTrees => "boosting",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind(), LearnerKind::Linear | LearnerKind::L1Linear)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Mean | LearnerSpec::Linear => Ok(()),
            LearnerSpec::L1Linear(p) => p.validate(),
            LearnerSpec::RandomForest(p) => p.validate(),
            LearnerSpec::BoostedTrees(p) => p.validate(),
        }
    }
}

#[derive(Clone, Debug)]
enum FittedState {
    Constant(f64),
    Linear(LinearModel),
    Forest(Forest),
    Boosted(BoostedModel),
}

#[derive(Clone, Debug)]
pub struct FittedLearner {
    spec: LearnerSpec,
    task: Task,
    n_features: usize,
    state: FittedState,
}

impl FittedLearner {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn linear_model(&self) -> Option<&LinearModel> {
        match &self.state {
            FittedState::Linear(m) => Some(m),
            _ => None,
        }
    }

    pub fn boosted_model(&self) -> Option<&BoostedModel> {
        match &self.state {
            FittedState::Boosted(m) => Some(m),
            _ => None,
        }
    }
}

pub(crate) fn resolve_weights(n: usize, weights: Option<ArrayView1<f64>>) -> Result<Array1<f64>> {
    match weights {
        None => Ok(Array1::ones(n)),
        Some(w) => {
            check_len(n, w.len())?;
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(CateError::InvalidParameter(
                    "weights must be finite and non-negative".into(),
                ));
            }
            if w.sum() <= 0.0 {
                return Err(CateError::InvalidParameter("weights sum to zero".into()));
            }
            Ok(w.to_owned())
        }
    }
}

/// Row order that depends only on row contents, so fits that shuffle or
/// subsample rows are invariant to how the caller ordered the data.
pub(crate) fn canonical_order(x: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        y[a].total_cmp(&y[b])
            .then_with(|| {
                x.row(a)
                    .iter()
                    .zip(x.row(b).iter())
                    .map(|(u, v)| u.total_cmp(v))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| w[a].total_cmp(&w[b]))
    });
    order
}

pub(crate) fn weighted_mean(y: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    let sw: f64 = w.sum();
    y.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() / sw
}

/// Fit a base learner. `seed` drives any internal resampling.
pub fn fit(
    spec: &LearnerSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: Option<ArrayView1<f64>>,
    task: Task,
    seed: u64,
) -> Result<FittedLearner> {
    spec.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(CateError::EmptyData("learner training set"));
    }
    check_len(n, y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CateError::NonFinite("learner target"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CateError::NonFinite("learner covariates"));
    }
    if let Task::Probability(clip) = task {
        clip.validate()?;
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(CateError::InvalidParameter("probability targets must be 0 or 1".into()));
        }
    }
    let w = resolve_weights(n, weights)?;
    let state = match spec {
        LearnerSpec::Mean => FittedState::Constant(weighted_mean(y, w.view())),
        LearnerSpec::Linear => FittedState::Linear(linear::fit_ols(x, y, w.view())?),
        LearnerSpec::L1Linear(p) => FittedState::Linear(lasso::fit_lasso(p, x, y, w.view(), seed)?),
        LearnerSpec::RandomForest(p) => FittedState::Forest(Forest::fit(p, x, y, w.view(), seed)?),
        LearnerSpec::BoostedTrees(p) => FittedState::Boosted(BoostedModel::fit(p, x, y, w.view(), seed)?),
    };
    Ok(FittedLearner {
        spec: spec.clone(),
        task,
        n_features: x.ncols(),
        state,
    })
}

/// Predict with a fitted learner; probability tasks are clipped.
pub fn predict(model: &FittedLearner, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_len(model.n_features, x.ncols())?;
    let mut out = match &model.state {
        FittedState::Constant(c) => Array1::from_elem(x.nrows(), *c),
        FittedState::Linear(m) => m.predict(x),
        FittedState::Forest(f) => f.predict(x),
        FittedState::Boosted(b) => b.predict(x),
    };
    if let Task::Probability(clip) = model.task {
        out.mapv_inplace(|v| clip.apply(v));
    }
    Ok(out)
}
