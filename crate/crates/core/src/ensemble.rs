//! Super-learner stacking: a convex combination of base learners with
//! weights chosen by cross-validated least squares on the simplex.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CateError, Result};
use crate::learners::{self, BoostingParams, ClipBounds, FittedLearner, ForestParams, LassoParams, LearnerSpec, Task};
use crate::seed;
use crate::splitter::make_folds;

pub const STACK_FOLDS: usize = 5;
pub const MIN_STACK_ROWS: usize = 2 * STACK_FOLDS;

/// Candidate set and probability clipping shared by every nuisance and
/// final-stage fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub candidates: Vec<LearnerSpec>,
    #[serde(default)]
    pub clip: ClipBounds,
    /// Drop `Linear` and `L1Linear` from the candidate set everywhere.
    #[serde(default)]
    pub exclude_linear: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            candidates: vec![
                LearnerSpec::Mean,
                LearnerSpec::Linear,
                LearnerSpec::L1Linear(LassoParams::default()),
                LearnerSpec::RandomForest(ForestParams::default()),
                LearnerSpec::BoostedTrees(BoostingParams::default()),
            ],
            clip: ClipBounds::default(),
            exclude_linear: false,
        }
    }
}

impl LearnerConfig {
    /// Same candidate families with fewer trees, rounds and lambdas.
    pub fn desk() -> Self {
        Self {
            candidates: vec![
                LearnerSpec::Mean,
                LearnerSpec::Linear,
                LearnerSpec::L1Linear(LassoParams {
                    n_lambdas: 20,
                    ..LassoParams::default()
                }),
                LearnerSpec::RandomForest(ForestParams {
                    n_trees: 50,
                    ..ForestParams::default()
                }),
                LearnerSpec::BoostedTrees(BoostingParams {
                    n_rounds: 60,
                    ..BoostingParams::default()
                }),
            ],
            clip: ClipBounds::default(),
            exclude_linear: false,
        }
    }

    pub fn only(spec: LearnerSpec) -> Self {
        Self {
            candidates: vec![spec],
            clip: ClipBounds::default(),
            exclude_linear: false,
        }
    }

    pub fn effective_candidates(&self) -> Vec<LearnerSpec> {
        self.candidates
            .iter()
            .filter(|s| !(self.exclude_linear && s.is_linear()))
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.clip.validate()?;
        let c = self.effective_candidates();
        if c.is_empty() {
            return Err(CateError::InvalidParameter("candidate set is empty".into()));
        }
        c.iter().try_for_each(LearnerSpec::validate)
    }
}

/// Cross-validation record of a stack with more than one member.
#[derive(Clone, Debug, PartialEq)]
pub struct CvSummary {
    /// Weighted out-of-fold MSE of each member.
    pub member_risks: Vec<f64>,
    /// Weighted out-of-fold MSE of the weighted combination.
    pub stack_risk: f64,
    /// Seed of the stacking fold layout.
    pub fold_seed: u64,
}

#[derive(Clone, Debug)]
pub struct StackedModel {
    /// Refit on all rows; `None` where the weight is zero.
    members: Vec<Option<FittedLearner>>,
    weights: Array1<f64>,
    cv: Option<CvSummary>,
    task: Task,
}

impl StackedModel {
    pub fn members(&self) -> &[Option<FittedLearner>] {
        &self.members
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    /// `None` for a single-member stack, which needs no cross-validation.
    pub fn cv(&self) -> Option<&CvSummary> {
        self.cv.as_ref()
    }
}

fn member_seed(seed_: u64, spec: &LearnerSpec) -> u64 {
    seed::derive(seed_, &format!("member:{spec:?}"))
}

fn weighted_risk(z: ArrayView2<f64>, a: ArrayView1<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
    let pred = z.dot(&a);
    let sw = w.sum();
    pred.iter()
        .zip(y.iter())
        .zip(w.iter())
        .map(|((p, t), wi)| wi * (p - t) * (p - t))
        .sum::<f64>()
        / sw
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: ArrayView1<f64>) -> Array1<f64> {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.mapv(|x| (x - theta).max(0.0))
}

/// Minimise the weighted squared error `sum_i w_i (z_i . a - y_i)^2` over the
/// simplex. Starts from the best vertex and only accepts descent steps, so the
/// result never has higher risk than any single column.
pub fn simplex_least_squares(z: ArrayView2<f64>, y: ArrayView1<f64>, w: ArrayView1<f64>) -> Array1<f64> {
    let m = z.ncols();
    let vertex = |j: usize| {
        let mut a = Array1::zeros(m);
        a[j] = 1.0;
        a
    };
    let risks: Vec<f64> = (0..m).map(|j| weighted_risk(z, vertex(j).view(), y, w)).collect();
    let best = (0..m).min_by(|&a, &b| risks[a].total_cmp(&risks[b])).unwrap_or(0);
    if m == 1 {
        return vertex(0);
    }
    let identical = (1..m).all(|j| {
        z.column(j)
            .iter()
            .zip(z.column(0).iter())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
    });
    if identical {
        return Array1::from_elem(m, 1.0 / m as f64);
    }

    let sw = w.sum();
    let wz = &z * &w.insert_axis(Axis(1));
    let gram = z.t().dot(&wz) / sw;
    let lin = wz.t().dot(&y) / sw;
    let objective = |a: &Array1<f64>| a.dot(&gram.dot(a)) - 2.0 * lin.dot(a);
    let lipschitz = 2.0 * gram.diag().sum().max(f64::MIN_POSITIVE);
    let step = 1.0 / lipschitz;

    let mut a = vertex(best);
    let mut f = objective(&a);
    for _ in 0..20_000 {
        let grad = (gram.dot(&a) - &lin) * 2.0;
        let next = project_simplex((&a - &(grad * step)).view());
        let fn_ = objective(&next);
        if !(fn_ < f) {
            break;
        }
        let moved = (&next - &a).mapv(f64::abs).sum();
        a = next;
        let improvement = f - fn_;
        f = fn_;
        if moved < 1e-13 || improvement <= 1e-15 * (1.0 + f.abs()) {
            break;
        }
    }
    if weighted_risk(z, a.view(), y, w) > risks[best] {
        return vertex(best);
    }
    a
}

/// Out-of-fold predictions of each spec (columns) over a `STACK_FOLDS` layout.
pub fn out_of_fold_matrix(
    specs: &[LearnerSpec],
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    task: Task,
    seed_: u64,
) -> Result<(Array2<f64>, u64)> {
    let n = x.nrows();
    let fold_seed = seed::derive(seed_, "stack-folds");
    let plan = make_folds(n, STACK_FOLDS, fold_seed)?;
    let jobs: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|j| (0..STACK_FOLDS).map(move |f| (j, f)))
        .collect();
    type FoldPrediction = (usize, Vec<usize>, Array1<f64>);
    let results: Vec<Result<FoldPrediction>> = jobs
        .par_iter()
        .map(|&(j, f)| {
            let held = plan.fold_rows(f);
            let train: Vec<usize> = (0..STACK_FOLDS)
                .filter(|&g| g != f)
                .flat_map(|g| plan.fold_rows(g))
                .collect();
            let mut train = train;
            train.sort_unstable();
            let xt = x.select(Axis(0), &train);
            let yt = y.select(Axis(0), &train);
            let wt = w.select(Axis(0), &train);
            let s = seed::derive_index(member_seed(seed_, &specs[j]), "fold", f as u64);
            let model = learners::fit(&specs[j], xt.view(), yt.view(), Some(wt.view()), task, s)?;
            let pred = learners::predict(&model, x.select(Axis(0), &held).view())?;
            Ok((j, held, pred))
        })
        .collect();
    let mut z = Array2::zeros((n, specs.len()));
    for r in results {
        let (j, held, pred) = r?;
        for (i, &row) in held.iter().enumerate() {
            z[[row, j]] = pred[i];
        }
    }
    Ok((z, fold_seed))
}

/// Fit a stacked ensemble; members are refit on all rows after weighting.
pub fn fit_stack(
    specs: &[LearnerSpec],
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: Option<ArrayView1<f64>>,
    task: Task,
    seed_: u64,
) -> Result<StackedModel> {
    if specs.is_empty() {
        return Err(CateError::InvalidParameter("stack needs at least one learner".into()));
    }
    let n = x.nrows();
    check_len(n, y.len())?;
    let w = learners::resolve_weights(n, weights)?;

    let (weights_out, cv) = if specs.len() == 1 {
        (Array1::ones(1), None)
    } else {
        if n < MIN_STACK_ROWS {
            return Err(CateError::InvalidParameter(format!(
                "stacking needs at least {MIN_STACK_ROWS} rows, got {n}"
            )));
        }
        let (z, fold_seed) = out_of_fold_matrix(specs, x, y, w.view(), task, seed_)?;
        let a = simplex_least_squares(z.view(), y, w.view());
        let member_risks = (0..specs.len())
            .map(|j| {
                let mut e = Array1::zeros(specs.len());
                e[j] = 1.0;
                weighted_risk(z.view(), e.view(), y, w.view())
            })
            .collect();
        let stack_risk = weighted_risk(z.view(), a.view(), y, w.view());
        (
            a,
            Some(CvSummary {
                member_risks,
                stack_risk,
                fold_seed,
            }),
        )
    };

    let members = specs
        .par_iter()
        .zip(weights_out.as_slice().expect("contiguous").par_iter())
        .map(|(spec, &a)| {
            (a > 0.0)
                .then(|| learners::fit(spec, x, y, Some(w.view()), task, member_seed(seed_, spec)))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(StackedModel {
        members,
        weights: weights_out,
        cv,
        task,
    })
}

/// Weighted combination of member predictions; probability tasks are
/// clipped again after mixing.
pub fn predict_stack(model: &StackedModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(x.nrows());
    for (m, &a) in model.members.iter().zip(model.weights.iter()) {
        if let Some(m) = m {
            out.scaled_add(a, &learners::predict(m, x)?);
        }
    }
    if let Task::Probability(clip) = model.task {
        out.mapv_inplace(|v| clip.apply(v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn data(n: usize, seed_: u64, linear: bool) -> (Array2<f64>, Array1<f64>) {
        let mut rng = seed::rng(seed_);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let y = if linear {
            x.map_axis(Axis(1), |r| 1.0 + 3.0 * r[0] - r[1])
        } else {
            x.map_axis(Axis(1), |r| (3.0_f64 * r[0]).sin() + rng.random_range(-0.5..0.5))
        };
        (x, y)
    }

    #[test]
    fn projection_lands_on_simplex() {
        let p = project_simplex(array![0.3, 2.0, -1.0].view());
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert_eq!(p, array![0.0, 1.0, 0.0]);
        let q = project_simplex(array![0.5, 0.5].view());
        assert_eq!(q, array![0.5, 0.5]);
    }

    #[test]
    fn single_member_gets_full_weight() {
        let (x, y) = data(30, 1, false);
        let m = fit_stack(&[LearnerSpec::Linear], x.view(), y.view(), None, Task::Regression, 0).unwrap();
        assert_eq!(m.weights().to_vec(), vec![1.0]);
        assert!(m.cv().is_none());
    }

    #[test]
    fn exact_linear_member_dominates() {
        let (x, y) = data(50, 2, true);
        let m = fit_stack(
            &[LearnerSpec::Mean, LearnerSpec::Linear],
            x.view(),
            y.view(),
            None,
            Task::Regression,
            3,
        )
        .unwrap();
        assert!(m.weights()[1] >= 0.99);
    }

    #[test]
    fn identical_members_share_weight() {
        let (x, y) = data(40, 3, false);
        let m = fit_stack(
            &[LearnerSpec::Mean, LearnerSpec::Mean],
            x.view(),
            y.view(),
            None,
            Task::Regression,
            0,
        )
        .unwrap();
        assert_eq!(m.weights().to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = data(40, 4, false);
        let y = Array1::from_elem(40, 2.5);
        let m = fit_stack(
            &LearnerConfig::desk().candidates,
            x.view(),
            y.view(),
            None,
            Task::Regression,
            0,
        )
        .unwrap();
        let pred = predict_stack(&m, x.view()).unwrap();
        assert!(pred.iter().all(|p| (p - 2.5).abs() < 1e-9));
    }

    #[test]
    fn too_few_rows_for_cv() {
        let (x, y) = data(9, 4, false);
        assert!(fit_stack(
            &[LearnerSpec::Mean, LearnerSpec::Linear],
            x.view(),
            y.view(),
            None,
            Task::Regression,
            0
        )
        .is_err());
        assert!(fit_stack(&[], x.view(), y.view(), None, Task::Regression, 0).is_err());
    }

    #[test]
    fn exclude_linear_filters_candidates() {
        let cfg = LearnerConfig {
            exclude_linear: true,
            ..LearnerConfig::default()
        };
        let names: Vec<&str> = cfg.effective_candidates().iter().map(|s| s.name()).collect();
        assert_eq!(names, vec!["mean", "forest", "boosting"]);
        let only_linear = LearnerConfig {
            exclude_linear: true,
            ..LearnerConfig::only(LearnerSpec::Linear)
        };
        assert!(only_linear.validate().is_err());
    }

    #[test]
    fn spec_order_permutes_weights() {
        let (x, y) = data(60, 5, false);
        let a = [
            LearnerSpec::Mean,
            LearnerSpec::Linear,
            LearnerSpec::RandomForest(ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            }),
        ];
        let b = [a[2].clone(), a[0].clone(), a[1].clone()];
        let ma = fit_stack(&a, x.view(), y.view(), None, Task::Regression, 7).unwrap();
        let mb = fit_stack(&b, x.view(), y.view(), None, Task::Regression, 7).unwrap();
        let (wa, wb) = (ma.weights(), mb.weights());
        assert!((wa[0] - wb[1]).abs() < 1e-12);
        assert!((wa[1] - wb[2]).abs() < 1e-12);
        assert!((wa[2] - wb[0]).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn stack_is_convex_and_dominant(seed_ in any::<u64>()) {
            let (x, y) = data(40, seed_, false);
            let specs = [LearnerSpec::Mean, LearnerSpec::Linear, LearnerSpec::RandomForest(ForestParams { n_trees: 10, ..ForestParams::default() })];
            let m = fit_stack(&specs, x.view(), y.view(), None, Task::Regression, seed_).unwrap();
            let w = m.weights();
            prop_assert!((w.sum() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            let cv = m.cv().unwrap();
            let best = cv.member_risks.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(cv.stack_risk <= best + 1e-9);
            let pred = predict_stack(&m, x.view()).unwrap();
            let members: Vec<Array1<f64>> = m.members().iter().flatten().map(|f| learners::predict(f, x.view()).unwrap()).collect();
            for i in 0..x.nrows() {
                let lo = members.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
                let hi = members.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(pred[i] >= lo - 1e-9 && pred[i] <= hi + 1e-9);
            }
        }
    }
}
