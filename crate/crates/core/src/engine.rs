//! Estimation driver: fits nuisances on their role folds, builds
//! pseudo-outcomes on the estimation fold, fits the final stage and
//! aggregates fold models by mean, concatenation or median.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::dgp::TrueNuisances;
use crate::ensemble::{fit_stack, predict_stack, LearnerConfig, StackedModel};
use crate::error::{check_len, CateError, Result};
use crate::learners::{ClipBounds, Task};
use crate::metalearners::{
    blend_x, final_stage, pseudo_dr, pseudo_r, pseudo_t, pseudo_x, MetaLearner, NuisancePredictions, PseudoOutcome,
};
use crate::seed;
use crate::splitter::{
    make_folds, rotations, Aggregation, FoldPlan, Partition, RoleAssignment, Strategy, StrategySpec,
};

/// Where nuisance predictions come from.
#[derive(Clone, Debug)]
pub enum NuisanceSource {
    Learned,
    /// Population functions of the data-generating process.
    Oracle(TrueNuisances),
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub learners: LearnerConfig,
    pub nuisances: NuisanceSource,
}

impl EngineConfig {
    pub fn learned(learners: LearnerConfig) -> Self {
        Self {
            learners,
            nuisances: NuisanceSource::Learned,
        }
    }

    pub fn oracle(learners: LearnerConfig, truth: TrueNuisances) -> Self {
        Self {
            learners,
            nuisances: NuisanceSource::Oracle(truth),
        }
    }
}

#[derive(Clone, Debug)]
pub enum PropensityModel {
    Learned(StackedModel),
    Oracle { truth: TrueNuisances, clip: ClipBounds },
}

impl PropensityModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            PropensityModel::Learned(m) => predict_stack(m, x),
            PropensityModel::Oracle { truth, clip } => Ok(truth.e(x)?.mapv(|v| clip.apply(v))),
        }
    }
}

/// CATE model of one rotation.
#[derive(Clone, Debug)]
pub enum FoldModel {
    Stack(StackedModel),
    /// Group-wise effect regressions blended with the propensity score,
    /// averaged over `propensity` when more than one model is given.
    X {
        tau0: StackedModel,
        tau1: StackedModel,
        propensity: Vec<PropensityModel>,
    },
}

impl FoldModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            FoldModel::Stack(m) => predict_stack(m, x),
            FoldModel::X { tau0, tau1, propensity } => {
                let mut g = Array1::zeros(x.nrows());
                for p in propensity {
                    g += &p.predict(x)?;
                }
                g /= propensity.len() as f64;
                blend_x(predict_stack(tau0, x)?.view(), predict_stack(tau1, x)?.view(), g.view())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum CateModel {
    Single(Box<FoldModel>),
    CrossFitMean(Vec<FoldModel>),
    MedianOf(Vec<CateModel>),
}

impl CateModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            CateModel::Single(m) => m.predict(x),
            CateModel::CrossFitMean(models) => {
                let mut out = Array1::zeros(x.nrows());
                for m in models {
                    out += &m.predict(x)?;
                }
                Ok(out / models.len() as f64)
            }
            CateModel::MedianOf(models) => {
                let preds = models.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
                Ok(elementwise_median(&preds))
            }
        }
    }
}

pub fn predict(model: &CateModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    model.predict(x)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn elementwise_median(preds: &[Array1<f64>]) -> Array1<f64> {
    let n = preds.first().map_or(0, Array1::len);
    let mut buf = vec![0.0; preds.len()];
    Array1::from_shape_fn(n, |i| {
        for (b, p) in preds.iter().enumerate() {
            buf[b] = p[i];
        }
        median(&mut buf)
    })
}

/// Test-set MSE of the median over the first `b` members, for `b = 1..=B`.
pub fn median_curve(model: &CateModel, x: ArrayView2<f64>, tau_true: &Array1<f64>) -> Result<Vec<f64>> {
    let CateModel::MedianOf(models) = model else {
        return Err(CateError::Incompatible("median curve needs a median model".into()));
    };
    check_len(x.nrows(), tau_true.len())?;
    let preds = models.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
    Ok((1..=preds.len())
        .map(|b| {
            let med = elementwise_median(&preds[..b]);
            (&med - tau_true).mapv(|v| v * v).mean().unwrap_or(0.0)
        })
        .collect())
}

/// Row bookkeeping for one nuisance fit.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditEntry {
    pub iteration: usize,
    pub rotation: usize,
    pub nuisance: &'static str,
    pub train_rows: usize,
    pub estimation_rows: usize,
    /// Training rows that are also rows the model predicts for.
    pub overlap: usize,
}

/// Per-rotation diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRecord {
    pub iteration: usize,
    pub rotation: usize,
    pub fold_seed: u64,
    pub final_rows: usize,
    pub psi_mean: f64,
    pub psi_sd: f64,
    /// Stack weights per fitted function (nuisances and final stages).
    pub weights: Vec<(&'static str, Vec<f64>)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub audit: Vec<AuditEntry>,
    pub records: Vec<FitRecord>,
    /// Median iterations that failed and were dropped.
    pub failed_iterations: Vec<(usize, String)>,
}

impl Trace {
    fn extend(&mut self, other: Trace) {
        self.audit.extend(other.audit);
        self.records.extend(other.records);
        self.failed_iterations.extend(other.failed_iterations);
    }

    pub fn leakage(&self) -> impl Iterator<Item = &AuditEntry> {
        self.audit.iter().filter(|a| a.overlap > 0)
    }
}

#[derive(Clone, Debug)]
pub struct CateFit {
    pub learner: MetaLearner,
    pub strategy: Strategy,
    pub seed: u64,
    pub model: CateModel,
    pub trace: Trace,
}

impl CateFit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.model.predict(x)
    }
}

fn content_seed(seed_: u64, label: &str, rows: &[usize]) -> u64 {
    seed::derive(
        seed_,
        &format!("{label}:{}:{}", rows.first().copied().unwrap_or(0), rows.len()),
    )
}

fn overlap(n: usize, a: &[usize], b: &[usize]) -> usize {
    let mut mask = vec![false; n];
    for &i in a {
        mask[i] = true;
    }
    b.iter().filter(|&&i| mask[i]).count()
}

fn stack_on_rows(
    config: &LearnerConfig,
    data: &Dataset,
    rows: &[usize],
    target: &Array1<f64>,
    task: Task,
    seed_: u64,
) -> Result<StackedModel> {
    let x = data.x.select(Axis(0), rows);
    let y = target.select(Axis(0), rows);
    fit_stack(&config.effective_candidates(), x.view(), y.view(), None, task, seed_)
}

struct Context<'a> {
    data: &'a Dataset,
    learner: MetaLearner,
    config: &'a EngineConfig,
    seed: u64,
    iteration: usize,
    /// Skip the leakage check (naive strategy).
    allow_overlap: bool,
}

struct NuisanceOutput {
    preds: NuisancePredictions,
    propensity: Option<PropensityModel>,
    audit: Vec<AuditEntry>,
    weights: Vec<(&'static str, Vec<f64>)>,
}

impl Context<'_> {
    /// Fit the nuisances a learner needs and predict them on `predict_rows`.
    fn nuisances(
        &self,
        rotation: usize,
        outcome_rows: &[usize],
        propensity_rows: &[usize],
        predict_rows: &[usize],
    ) -> Result<NuisanceOutput> {
        let data = self.data;
        let xp = data.x.select(Axis(0), predict_rows);
        let clip = self.config.learners.clip;
        let mut out = NuisanceOutput {
            preds: NuisancePredictions::default(),
            propensity: None,
            audit: Vec::new(),
            weights: Vec::new(),
        };
        let need_groups = matches!(self.learner, MetaLearner::T | MetaLearner::Dr | MetaLearner::X);
        let need_pooled = self.learner == MetaLearner::R;
        let need_e = self.learner.needs_propensity();

        if let NuisanceSource::Oracle(truth) = &self.config.nuisances {
            if need_groups {
                out.preds.mu0 = Some(truth.mu0(xp.view())?);
                out.preds.mu1 = Some(truth.mu1(xp.view())?);
            }
            if need_pooled {
                out.preds.mu = Some(truth.mu(xp.view())?);
            }
            if need_e {
                let model = PropensityModel::Oracle { truth: *truth, clip };
                out.preds.e = Some(model.predict(xp.view())?);
                out.propensity = Some(model);
            }
            return Ok(out);
        }

        let mut audit = |name: &'static str, train: &[usize]| -> Result<()> {
            let entry = AuditEntry {
                iteration: self.iteration,
                rotation,
                nuisance: name,
                train_rows: train.len(),
                estimation_rows: predict_rows.len(),
                overlap: overlap(data.n(), train, predict_rows),
            };
            if entry.overlap > 0 && !self.allow_overlap {
                return Err(CateError::Leakage {
                    nuisance: name.to_string(),
                    overlap: entry.overlap,
                });
            }
            out.audit.push(entry);
            Ok(())
        };

        let learners = &self.config.learners;
        let mut fitted: Vec<(&'static str, StackedModel)> = Vec::new();
        if need_groups {
            for (name, treated) in [("mu0", false), ("mu1", true)] {
                let rows = data.rows_with_treatment(outcome_rows, treated);
                if rows.is_empty() {
                    return Err(CateError::DegenerateFold(format!(
                        "outcome fold of rotation {rotation} has no {} rows",
                        if treated { "treated" } else { "control" }
                    )));
                }
                audit(name, &rows)?;
                let s = content_seed(self.seed, name, &rows);
                fitted.push((
                    name,
                    stack_on_rows(learners, data, &rows, &data.y, Task::Regression, s)?,
                ));
            }
        }
        if need_pooled {
            audit("mu", outcome_rows)?;
            let s = content_seed(self.seed, "mu", outcome_rows);
            fitted.push((
                "mu",
                stack_on_rows(learners, data, outcome_rows, &data.y, Task::Regression, s)?,
            ));
        }
        if need_e {
            let treated = data.rows_with_treatment(propensity_rows, true).len();
            if treated == 0 || treated == propensity_rows.len() {
                return Err(CateError::DegenerateFold(format!(
                    "propensity fold of rotation {rotation} has a single treatment class"
                )));
            }
            audit("e", propensity_rows)?;
            let s = content_seed(self.seed, "e", propensity_rows);
            fitted.push((
                "e",
                stack_on_rows(learners, data, propensity_rows, &data.d, Task::Probability(clip), s)?,
            ));
        }
        for (name, model) in fitted {
            let pred = predict_stack(&model, xp.view())?;
            out.weights.push((name, model.weights().to_vec()));
            match name {
                "mu0" => out.preds.mu0 = Some(pred),
                "mu1" => out.preds.mu1 = Some(pred),
                "mu" => out.preds.mu = Some(pred),
                _ => {
                    out.preds.e = Some(pred);
                    out.propensity = Some(PropensityModel::Learned(model));
                }
            }
        }
        Ok(out)
    }

    /// Pseudo-outcome on `rows` and the final-stage fit.
    fn estimate(
        &self,
        rows: &[usize],
        preds: &NuisancePredictions,
        propensity: Vec<PropensityModel>,
        weights: &mut Vec<(&'static str, Vec<f64>)>,
    ) -> Result<(FoldModel, PseudoSummary)> {
        let data = self.data;
        let x = data.x.select(Axis(0), rows);
        let y = data.y.select(Axis(0), rows);
        let d = data.d.select(Axis(0), rows);
        let missing = |name: &'static str| CateError::Incompatible(format!("missing nuisance {name}"));
        let mu0 = || preds.mu0.as_ref().ok_or_else(|| missing("mu0"));
        let mu1 = || preds.mu1.as_ref().ok_or_else(|| missing("mu1"));
        let e = || preds.e.as_ref().ok_or_else(|| missing("e"));
        let learners = &self.config.learners;
        let final_seed = |label: &str| content_seed(self.seed, label, rows);

        let single =
            |psi: PseudoOutcome, weights: &mut Vec<(&'static str, Vec<f64>)>| -> Result<(FoldModel, PseudoSummary)> {
                let summary = PseudoSummary::of(&psi);
                let m = final_stage(&psi, x.view(), learners, final_seed("final"))?;
                weights.push(("tau", m.weights().to_vec()));
                Ok((FoldModel::Stack(m), summary))
            };
        match self.learner {
            MetaLearner::T => single(pseudo_t(mu0()?.view(), mu1()?.view())?, weights),
            MetaLearner::Dr => single(
                pseudo_dr(y.view(), d.view(), mu0()?.view(), mu1()?.view(), e()?.view())?,
                weights,
            ),
            MetaLearner::R => {
                let mu = preds.mu.as_ref().ok_or_else(|| missing("mu"))?;
                single(pseudo_r(y.view(), d.view(), mu.view(), e()?.view())?, weights)
            }
            MetaLearner::X => {
                let (treated, control) = pseudo_x(y.view(), d.view(), mu0()?.view(), mu1()?.view())?;
                let mut all = treated.psi.to_vec();
                all.extend(control.psi.iter());
                let summary = PseudoSummary::from_values(&all, rows.len());
                let tau1 = final_stage(&treated, x.view(), learners, final_seed("tau1"))?;
                let tau0 = final_stage(&control, x.view(), learners, final_seed("tau0"))?;
                weights.push(("tau1", tau1.weights().to_vec()));
                weights.push(("tau0", tau0.weights().to_vec()));
                if propensity.is_empty() {
                    return Err(missing("e"));
                }
                Ok((FoldModel::X { tau0, tau1, propensity }, summary))
            }
        }
    }

    fn rotation(&self, plan: &FoldPlan, r: usize, role: &RoleAssignment, fold_seed: u64) -> Result<(FoldModel, Trace)> {
        let outcome = plan.rows_in(&role.outcome);
        let propensity = plan.rows_in(&role.propensity);
        let est = plan.rows_in(&role.estimation);
        let nz = self.nuisances(r, &outcome, &propensity, &est)?;
        let mut weights = nz.weights;
        let (model, summary) = self.estimate(&est, &nz.preds, nz.propensity.into_iter().collect(), &mut weights)?;
        let record = FitRecord {
            iteration: self.iteration,
            rotation: r,
            fold_seed,
            final_rows: summary.rows,
            psi_mean: summary.mean,
            psi_sd: summary.sd,
            weights,
        };
        Ok((
            model,
            Trace {
                audit: nz.audit,
                records: vec![record],
                failed_iterations: Vec::new(),
            },
        ))
    }

    /// Out-of-fold nuisances for every row, then one final stage on all rows.
    fn combined(&self, plan: &FoldPlan, fold_seed: u64) -> Result<(FoldModel, Trace)> {
        let n = self.data.n();
        let k = plan.k();
        let parts = (0..k)
            .into_par_iter()
            .map(|f| {
                let held = plan.fold_rows(f);
                let train: Vec<usize> = plan.rows_in(&(0..k).filter(|&g| g != f).collect::<Vec<_>>());
                self.nuisances(f, &train, &train, &held).map(|nz| (held, nz))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut preds = NuisancePredictions::default();
        let mut trace = Trace::default();
        let mut propensity = Vec::new();
        let mut weights = Vec::new();
        {
            let scatter = |slot: &mut Option<Array1<f64>>, held: &[usize], part: &Option<Array1<f64>>| {
                if let Some(v) = part {
                    let full = slot.get_or_insert_with(|| Array1::zeros(n));
                    for (i, &row) in held.iter().enumerate() {
                        full[row] = v[i];
                    }
                }
            };
            for (held, nz) in parts {
                scatter(&mut preds.mu0, &held, &nz.preds.mu0);
                scatter(&mut preds.mu1, &held, &nz.preds.mu1);
                scatter(&mut preds.mu, &held, &nz.preds.mu);
                scatter(&mut preds.e, &held, &nz.preds.e);
                trace.audit.extend(nz.audit);
                weights.extend(nz.weights);
                propensity.extend(nz.propensity);
            }
        }
        let all: Vec<usize> = (0..n).collect();
        let (model, summary) = self.estimate(&all, &preds, propensity, &mut weights)?;
        trace.records.push(FitRecord {
            iteration: self.iteration,
            rotation: 0,
            fold_seed,
            final_rows: summary.rows,
            psi_mean: summary.mean,
            psi_sd: summary.sd,
            weights,
        });
        Ok((model, trace))
    }
}

struct PseudoSummary {
    rows: usize,
    mean: f64,
    sd: f64,
}

impl PseudoSummary {
    fn of(psi: &PseudoOutcome) -> Self {
        Self::from_values(psi.psi.as_slice().unwrap_or(&psi.psi.to_vec()), psi.len())
    }

    fn from_values(v: &[f64], rows: usize) -> Self {
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        Self { rows, mean, sd }
    }
}

fn check_compatible(learner: MetaLearner, strategy: Strategy) -> Result<()> {
    if strategy.supports(learner) {
        Ok(())
    } else {
        Err(CateError::Incompatible(format!(
            "{} does not support strategy {strategy}",
            learner.label()
        )))
    }
}

/// Seed of the fold partition for median iteration `b` (or `0` for
/// non-median strategies).
pub fn partition_seed(seed_: u64, iteration: usize) -> u64 {
    seed::derive_index(seed_, "partition", iteration as u64)
}

pub fn plan_for(n: usize, strategy: Strategy, fold_seed: u64) -> Result<FoldPlan> {
    make_folds(n, strategy.k(), fold_seed)
}

/// Fit a non-median strategy on an explicit partition.
pub fn fit_with_plan(
    data: &Dataset,
    learner: MetaLearner,
    strategy: Strategy,
    plan: &FoldPlan,
    config: &EngineConfig,
    seed_: u64,
) -> Result<CateFit> {
    fit_iteration(data, learner, strategy, plan, config, seed_, 0, seed_).map(|(model, trace)| CateFit {
        learner,
        strategy,
        seed: seed_,
        model,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn fit_iteration(
    data: &Dataset,
    learner: MetaLearner,
    strategy: Strategy,
    plan: &FoldPlan,
    config: &EngineConfig,
    seed_: u64,
    iteration: usize,
    fold_seed: u64,
) -> Result<(CateModel, Trace)> {
    check_compatible(learner, strategy)?;
    if strategy.is_median() {
        return Err(CateError::Incompatible("median strategies need fit_median".into()));
    }
    check_len(data.n(), plan.n())?;
    let ctx = Context {
        data,
        learner,
        config,
        seed: seed_,
        iteration,
        allow_overlap: strategy.partition() == Partition::None,
    };
    match strategy.aggregation() {
        Aggregation::Combined => {
            let (m, trace) = ctx.combined(plan, fold_seed)?;
            Ok((CateModel::Single(Box::new(m)), trace))
        }
        agg => {
            let roles = rotations(plan, strategy)?;
            let fits = roles
                .par_iter()
                .enumerate()
                .map(|(r, role)| ctx.rotation(plan, r, role, fold_seed))
                .collect::<Result<Vec<_>>>()?;
            let mut trace = Trace::default();
            let mut models = Vec::with_capacity(fits.len());
            for (m, t) in fits {
                models.push(m);
                trace.extend(t);
            }
            Ok(match agg {
                Aggregation::Single => (CateModel::Single(Box::new(models.remove(0))), trace),
                _ => (CateModel::CrossFitMean(models), trace),
            })
        }
    }
}

pub fn fit_crossfit(
    data: &Dataset,
    learner: MetaLearner,
    strategy: Strategy,
    config: &EngineConfig,
    seed_: u64,
) -> Result<CateFit> {
    if strategy.aggregation() != Aggregation::CrossFit || strategy.is_median() {
        return Err(CateError::Incompatible(format!(
            "{strategy} is not a cross-fit strategy"
        )));
    }
    fit_plain(data, learner, strategy, config, seed_)
}

pub fn fit_combined(data: &Dataset, learner: MetaLearner, config: &EngineConfig, seed_: u64) -> Result<CateFit> {
    fit_plain(data, learner, Strategy::Fold5Combined, config, seed_)
}

fn fit_plain(
    data: &Dataset,
    learner: MetaLearner,
    strategy: Strategy,
    config: &EngineConfig,
    seed_: u64,
) -> Result<CateFit> {
    let fold_seed = partition_seed(seed_, 0);
    let plan = plan_for(data.n(), strategy, fold_seed)?;
    let (model, trace) = fit_iteration(data, learner, strategy, &plan, config, seed_, 0, fold_seed)?;
    Ok(CateFit {
        learner,
        strategy,
        seed: seed_,
        model,
        trace,
    })
}

/// `b_iterations` fresh partitions of the same data; prediction is the
/// element-wise median. Failed iterations are dropped and logged.
pub fn fit_median(
    data: &Dataset,
    learner: MetaLearner,
    strategy: Strategy,
    b_iterations: usize,
    config: &EngineConfig,
    seed_: u64,
) -> Result<CateFit> {
    let spec = StrategySpec::new(strategy, b_iterations)?;
    let inner = strategy.inner();
    if inner.aggregation() == Aggregation::Single {
        return Err(CateError::Incompatible(format!(
            "median needs a cross-fit or combined strategy, got {inner}"
        )));
    }
    check_compatible(learner, strategy)?;
    let results: Vec<(usize, Result<(CateModel, Trace)>)> = (0..spec.b_iterations)
        .into_par_iter()
        .map(|b| {
            let fold_seed = partition_seed(seed_, b);
            let res = plan_for(data.n(), inner, fold_seed)
                .and_then(|plan| fit_iteration(data, learner, inner, &plan, config, seed_, b, fold_seed));
            (b, res)
        })
        .collect();
    let mut trace = Trace::default();
    let mut models = Vec::new();
    let mut first_err = None;
    for (b, res) in results {
        match res {
            Ok((m, t)) => {
                models.push(m);
                trace.extend(t);
            }
            Err(e @ CateError::Leakage { .. }) => return Err(e),
            Err(e) => {
                trace.failed_iterations.push((b, e.to_string()));
                first_err.get_or_insert(e);
            }
        }
    }
    if models.is_empty() {
        return Err(first_err.unwrap_or(CateError::EmptyData("median iterations")));
    }
    Ok(CateFit {
        learner,
        strategy,
        seed: seed_,
        model: CateModel::MedianOf(models),
        trace,
    })
}

/// Fit any of the twelve strategies.
pub fn fit(
    data: &Dataset,
    learner: MetaLearner,
    strategy: StrategySpec,
    config: &EngineConfig,
    seed_: u64,
) -> Result<CateFit> {
    check_compatible(learner, strategy.name)?;
    if strategy.name.is_median() {
        fit_median(data, learner, strategy.name, strategy.b_iterations, config, seed_)
    } else {
        fit_plain(data, learner, strategy.name, config, seed_)
    }
}

/// Stack predictions of several models as rows of a matrix.
pub fn prediction_matrix(models: &[&CateModel], x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((models.len(), x.nrows()));
    for (i, m) in models.iter().enumerate() {
        out.row_mut(i).assign(&m.predict(x)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{Scenario, ScenarioFrame};
    use crate::learners::LearnerSpec;
    use ndarray::array;

    fn frame(id: &str, n: usize) -> ScenarioFrame {
        let scenario = Scenario {
            n,
            test_size: 200,
            ..Scenario::catalog(id).unwrap()
        };
        ScenarioFrame::new(&scenario).unwrap()
    }

    fn linear_config() -> EngineConfig {
        EngineConfig::learned(LearnerConfig::only(LearnerSpec::Linear))
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut [1.0, 100.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0]), 2.5);
        let m = elementwise_median(&[array![1.0, 5.0], array![100.0, 5.0], array![2.0, 5.0]]);
        assert_eq!(m, array![2.0, 5.0]);
    }

    #[test]
    fn single_split_never_leaks() {
        let f = frame("B", 200);
        let train = f.draw_train(1).unwrap();
        for learner in MetaLearner::ALL {
            let fit = fit(
                &train.data,
                learner,
                StrategySpec::new(Strategy::Split5050, 1).unwrap(),
                &linear_config(),
                3,
            )
            .unwrap();
            assert!(fit.trace.leakage().next().is_none());
            assert!(!fit.trace.audit.is_empty());
            assert!(fit.trace.audit.iter().all(|a| a.estimation_rows == 100));
        }
    }

    #[test]
    fn naive_uses_all_rows() {
        let f = frame("A", 120);
        let train = f.draw_train(2).unwrap();
        let fit = fit(
            &train.data,
            MetaLearner::R,
            StrategySpec::new(Strategy::Naive, 1).unwrap(),
            &linear_config(),
            0,
        )
        .unwrap();
        assert!(fit.trace.audit.iter().all(|a| a.train_rows == 120 && a.overlap == 120));
        assert_eq!(fit.trace.records[0].final_rows, 120);
    }

    #[test]
    fn t_learner_rejects_combined() {
        let f = frame("A", 100);
        let train = f.draw_train(2).unwrap();
        let err = fit(
            &train.data,
            MetaLearner::T,
            StrategySpec::new(Strategy::Fold5Combined, 1).unwrap(),
            &linear_config(),
            0,
        );
        assert!(matches!(err, Err(CateError::Incompatible(_))));
    }

    #[test]
    fn combined_accounting() {
        let f = frame("A", 100);
        let train = f.draw_train(3).unwrap();
        let data = train.data.select(&(0..25).collect::<Vec<_>>());
        let cfg = EngineConfig::learned(LearnerConfig::only(LearnerSpec::Mean));
        let fit = fit_combined(&data, MetaLearner::Dr, &cfg, 4);
        let fit = match fit {
            Ok(f) => f,
            Err(CateError::DegenerateFold(_)) => return,
            Err(e) => panic!("{e}"),
        };
        assert_eq!(fit.trace.records.len(), 1);
        assert_eq!(fit.trace.records[0].final_rows, 25);
        assert!(fit.trace.leakage().next().is_none());
        let held: usize = fit
            .trace
            .audit
            .iter()
            .filter(|a| a.nuisance == "e")
            .map(|a| a.estimation_rows)
            .sum();
        assert_eq!(held, 25);
    }

    #[test]
    fn oracle_combined_matches_naive_pseudo_outcomes() {
        let f = frame("A", 150);
        let train = f.draw_train(5).unwrap();
        let cfg = EngineConfig::oracle(LearnerConfig::only(LearnerSpec::Linear), f.truth());
        let naive = fit(
            &train.data,
            MetaLearner::Dr,
            StrategySpec::new(Strategy::Naive, 1).unwrap(),
            &cfg,
            1,
        )
        .unwrap();
        let comb = fit_combined(&train.data, MetaLearner::Dr, &cfg, 1).unwrap();
        let (a, b) = (&naive.trace.records[0], &comb.trace.records[0]);
        assert!((a.psi_mean - b.psi_mean).abs() < 1e-12);
        assert!((a.psi_sd - b.psi_sd).abs() < 1e-12);
        let pa = naive.predict(f.test.data.x.view()).unwrap();
        let pb = comb.predict(f.test.data.x.view()).unwrap();
        assert!((&pa - &pb).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn relabeled_folds_give_same_crossfit() {
        let f = frame("C", 150);
        let train = f.draw_train(6).unwrap();
        let cfg = linear_config();
        for (strategy, mapping) in [
            (Strategy::Split5050Cf, vec![1, 0]),
            (Strategy::DoubleSplitCf, vec![1, 2, 0]),
            (Strategy::Fold5Cf, vec![2, 0, 1, 4, 3]),
        ] {
            let plan = plan_for(150, strategy, 11).unwrap();
            let a = fit_with_plan(&train.data, MetaLearner::X, strategy, &plan, &cfg, 9).unwrap();
            let b = fit_with_plan(
                &train.data,
                MetaLearner::X,
                strategy,
                &plan.relabel(&mapping).unwrap(),
                &cfg,
                9,
            )
            .unwrap();
            let pa = a.predict(f.test.data.x.view()).unwrap();
            let pb = b.predict(f.test.data.x.view()).unwrap();
            assert!((&pa - &pb).iter().all(|v| v.abs() < 1e-10), "{strategy}");
        }
    }

    #[test]
    fn median_of_one_equals_inner() {
        let f = frame("A", 120);
        let train = f.draw_train(7).unwrap();
        let cfg = linear_config();
        let med = fit_median(&train.data, MetaLearner::Dr, Strategy::MedianFold5Cf, 1, &cfg, 2).unwrap();
        let cf = fit_crossfit(&train.data, MetaLearner::Dr, Strategy::Fold5Cf, &cfg, 2).unwrap();
        let x = f.test.data.x.view();
        assert_eq!(med.predict(x).unwrap(), cf.predict(x).unwrap());
        let curve = median_curve(&med.model, x, &f.test.tau_true).unwrap();
        assert_eq!(curve.len(), 1);
    }

    #[test]
    fn median_brackets_members() {
        let f = frame("B", 120);
        let train = f.draw_train(8).unwrap();
        let med = fit_median(
            &train.data,
            MetaLearner::R,
            Strategy::MedianSplit5050Cf,
            4,
            &linear_config(),
            3,
        )
        .unwrap();
        let x = f.test.data.x.view();
        let CateModel::MedianOf(members) = &med.model else {
            panic!()
        };
        let m = prediction_matrix(&members.iter().collect::<Vec<_>>(), x).unwrap();
        let p = med.predict(x).unwrap();
        for i in 0..p.len() {
            let col = m.column(i);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(p[i] >= lo && p[i] <= hi);
        }
        assert_eq!(med.trace.records.len(), 8);
    }

    #[test]
    fn deterministic() {
        let f = frame("D", 120);
        let train = f.draw_train(9).unwrap();
        let cfg = linear_config();
        let spec = StrategySpec::new(Strategy::MedianDoubleSplitCf, 2).unwrap();
        let a = fit(&train.data, MetaLearner::X, spec, &cfg, 5).unwrap();
        let b = fit(&train.data, MetaLearner::X, spec, &cfg, 5).unwrap();
        let x = f.test.data.x.view();
        assert_eq!(a.predict(x).unwrap(), b.predict(x).unwrap());
    }
}
