//! Simulated observational data from a partially linear model
//!
//! `Y = tau(X) D + g(X) + U`, with correlated Gaussian covariates, a
//! propensity score built from the standard normal CDF of a standardized
//! index `a(X)`, and one of four treatment-effect shapes.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{CateError, Result};
use crate::seed::{self, Rng};

/// Rows drawn to estimate the mean and spread of the propensity index.
pub const REFERENCE_DRAW: usize = 20_000;

/// Smallest distance of a true propensity from 0 or 1.
const PROPENSITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub p: usize,
    pub seed: u64,
}

/// Random correlation matrix: `A` with iid Uniform(-1, 1) entries,
/// `S = A'A + p I`, rescaled to unit diagonal.
pub fn generate_correlation(spec: &CorrelationSpec) -> Result<Array2<f64>> {
    let p = spec.p;
    if p == 0 {
        return Err(CateError::InvalidParameter("p must be at least 1".into()));
    }
    let mut rng = seed::rng(spec.seed);
    let a = Array2::from_shape_fn((p, p), |_| rng.random_range(-1.0..1.0));
    let mut cov = a.t().dot(&a);
    cov.diag_mut().mapv_inplace(|v| v + p as f64);
    let scale: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();
    let mut corr = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let v = if i == j {
                1.0
            } else {
                (cov[[i, j]] / (scale[i] * scale[j])).clamp(-1.0, 1.0)
            };
            corr[[i, j]] = v;
            corr[[j, i]] = v;
        }
    }
    Ok(corr)
}

/// Multivariate normal sampler with a fixed correlation factor.
#[derive(Clone, Debug)]
pub struct CovariateSampler {
    /// Lower factor `L` with `L L' = corr`.
    factor: Array2<f64>,
}

impl CovariateSampler {
    pub fn new(corr: &Array2<f64>) -> Result<Self> {
        let p = corr.nrows();
        if p == 0 || corr.ncols() != p {
            return Err(CateError::DimensionMismatch {
                expected: p,
                found: corr.ncols(),
            });
        }
        let m = DMatrix::from_fn(p, p, |i, j| corr[[i, j]]);
        if let Some(chol) = m.clone().cholesky() {
            let l = chol.l();
            return Ok(Self {
                factor: Array2::from_shape_fn((p, p), |(i, j)| l[(i, j)]),
            });
        }
        // Singular but PSD inputs (e.g. perfectly correlated columns) get an
        // eigen factor instead.
        let eig = SymmetricEigen::new(m);
        let min = eig.eigenvalues.min();
        if min < -1e-10 || !min.is_finite() {
            return Err(CateError::InvalidCorrelation { min_eigenvalue: min });
        }
        let factor = Array2::from_shape_fn((p, p), |(i, j)| {
            eig.eigenvectors[(i, j)] * eig.eigenvalues[j].max(0.0).sqrt()
        });
        Ok(Self { factor })
    }

    pub fn p(&self) -> usize {
        self.factor.nrows()
    }

    pub fn draw(&self, n: usize, rng: &mut Rng) -> Array2<f64> {
        let p = self.p();
        let z = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(rng));
        z.dot(&self.factor.t())
    }
}

/// Draw `n` iid rows from N(0, corr).
pub fn draw_covariates(n: usize, corr: &Array2<f64>, rng: &mut Rng) -> Result<Array2<f64>> {
    Ok(CovariateSampler::new(corr)?.draw(n, rng))
}

fn require_dim(x: &ArrayView1<f64>, p: usize) -> Result<()> {
    if x.len() < p {
        Err(CateError::DimensionMismatch {
            expected: p,
            found: x.len(),
        })
    } else {
        Ok(())
    }
}

/// Baseline outcome `g(x) = x1 + x5 + x4 * x5` (1-based covariates).
pub fn baseline_g(x: ArrayView1<f64>) -> Result<f64> {
    require_dim(&x, 5)?;
    Ok(x[0] + x[4] + x[3] * x[4])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityFamily {
    /// Randomized assignment with `e(x) = 0.5`.
    RandomBalanced,
    /// Randomized assignment with `e(x) = 0.2`.
    RandomImbalanced,
    Linear,
    Interaction,
    NonLinear,
}

impl PropensityFamily {
    /// Assignment probability for randomized families.
    pub fn constant(self) -> Option<f64> {
        match self {
            PropensityFamily::RandomBalanced => Some(0.5),
            PropensityFamily::RandomImbalanced => Some(0.2),
            _ => None,
        }
    }
}

/// `x . b` with `b_l = 1 / l`.
fn harmonic_weighted_sum(x: &ArrayView1<f64>) -> f64 {
    x.iter().enumerate().map(|(l, v)| v / (l + 1) as f64).sum()
}

/// Selection index `a(x)`; `None` for randomized families.
///
/// The linear index lists `x2` twice and is kept that way, so `x2` carries
/// coefficient 2.
pub fn propensity_index(x: ArrayView1<f64>, family: PropensityFamily) -> Result<Option<f64>> {
    let a = match family {
        PropensityFamily::RandomBalanced | PropensityFamily::RandomImbalanced => return Ok(None),
        PropensityFamily::Linear => {
            require_dim(&x, 8)?;
            x[1] + x[4] + x[1] - x[7]
        }
        PropensityFamily::Interaction => {
            require_dim(&x, 8)?;
            harmonic_weighted_sum(&x) + x[4] + x[1] + x[2] * x[7]
        }
        PropensityFamily::NonLinear => {
            require_dim(&x, 8)?;
            harmonic_weighted_sum(&x) + x[4].sin() + x[1] + (x[3] * x[7]).cos()
        }
    };
    Ok(Some(a))
}

/// Mean and standard deviation of `a(X)` used to standardize the index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: f64,
    pub sd: f64,
}

impl StandardizationStats {
    pub fn from_index(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, sd: var.sqrt() }
    }

    /// Stats of `a(X)` over the rows of `x`; `None` for randomized families.
    pub fn estimate(x: ArrayView2<f64>, family: PropensityFamily) -> Result<Option<Self>> {
        if family.constant().is_some() {
            return Ok(None);
        }
        let mut values = Vec::with_capacity(x.nrows());
        for row in x.rows() {
            values.extend(propensity_index(row, family)?);
        }
        Ok(Some(Self::from_index(&values)))
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// True propensity score `e(x)`.
pub fn propensity_score(
    x: ArrayView1<f64>,
    family: PropensityFamily,
    stats: Option<&StandardizationStats>,
) -> Result<f64> {
    if let Some(c) = family.constant() {
        return Ok(c);
    }
    let stats = stats.ok_or(CateError::DegeneratePropensity)?;
    if !(stats.sd > 0.0) {
        return Err(CateError::DegeneratePropensity);
    }
    let a = propensity_index(x, family)?.expect("non-random family has an index");
    let e = std_normal_cdf((a - stats.mean) / stats.sd);
    Ok(e.clamp(PROPENSITY_FLOOR, 1.0 - PROPENSITY_FLOOR))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectFamily {
    Linear,
    Binary,
    NonLinear,
    Zero,
}

/// How the linear effect `X1 + X2>0` is parsed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearEffectReading {
    /// `x1 + 1{x2 > 0}`
    #[default]
    IndicatorOnX2,
    /// `1{x1 + x2 > 0}`
    IndicatorOnSum,
}

/// Variance of the idiosyncratic term `W` in the linear effect.
pub const LINEAR_EFFECT_NOISE_VARIANCE: f64 = 0.5;

/// Systematic part `t(x)` of the treatment effect (no `W` draw).
pub fn effect_mean(x: ArrayView1<f64>, family: EffectFamily, reading: LinearEffectReading) -> Result<f64> {
    require_dim(&x, 10)?;
    let indicator = |c: bool| if c { 1.0 } else { 0.0 };
    Ok(match family {
        EffectFamily::Linear => match reading {
            LinearEffectReading::IndicatorOnX2 => x[0] + indicator(x[1] > 0.0),
            LinearEffectReading::IndicatorOnSum => indicator(x[0] + x[1] > 0.0),
        },
        EffectFamily::Binary => {
            if x[4] > 0.0 {
                2.0
            } else {
                1.0
            }
        }
        EffectFamily::NonLinear => (x[0] + 0.5 * x[1] + x[2] / 3.0).sin() + x[9].cos(),
        EffectFamily::Zero => 0.0,
    })
}

/// Realized treatment effect; the linear family adds `W ~ N(0, 0.5)`.
pub fn treatment_effect(
    x: ArrayView1<f64>,
    family: EffectFamily,
    reading: LinearEffectReading,
    rng: &mut Rng,
) -> Result<f64> {
    let t = effect_mean(x, family, reading)?;
    if family == EffectFamily::Linear {
        let w = Normal::new(0.0, LINEAR_EFFECT_NOISE_VARIANCE.sqrt())
            .expect("valid normal")
            .sample(rng);
        Ok(t + w)
    } else {
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub n: usize,
    pub p: usize,
    pub propensity: PropensityFamily,
    pub effect: EffectFamily,
    pub test_size: usize,
    pub corr_seed: u64,
    #[serde(default)]
    pub linear_reading: LinearEffectReading,
}

pub const SCENARIO_IDS: [&str; 12] = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L"];
pub const DEFAULT_TEST_SIZE: usize = 10_000;
pub const DEFAULT_CORR_SEED: u64 = 20_210_401;

impl Scenario {
    /// One of the twelve catalog settings `A`..`L`.
    pub fn catalog(id: &str) -> Result<Scenario> {
        let idx = SCENARIO_IDS
            .iter()
            .position(|s| s.eq_ignore_ascii_case(id))
            .ok_or_else(|| CateError::InvalidParameter(format!("unknown scenario `{id}`")))?;
        let (propensity, effect) = match idx % 6 {
            0 => (PropensityFamily::RandomBalanced, EffectFamily::Linear),
            1 => (PropensityFamily::RandomImbalanced, EffectFamily::Linear),
            2 => (PropensityFamily::Linear, EffectFamily::NonLinear),
            3 => (PropensityFamily::Interaction, EffectFamily::Binary),
            4 => (PropensityFamily::NonLinear, EffectFamily::NonLinear),
            _ => (PropensityFamily::Linear, EffectFamily::Zero),
        };
        Ok(Scenario {
            id: SCENARIO_IDS[idx].to_string(),
            n: if idx < 6 { 2000 } else { 500 },
            p: 20,
            propensity,
            effect,
            test_size: DEFAULT_TEST_SIZE,
            corr_seed: DEFAULT_CORR_SEED,
            linear_reading: LinearEffectReading::default(),
        })
    }

    pub fn all() -> Vec<Scenario> {
        SCENARIO_IDS
            .iter()
            .map(|id| Scenario::catalog(id).expect("catalog id"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 10 {
            return Err(CateError::InvalidParameter(format!(
                "scenario {} needs p >= 10, got {}",
                self.id, self.p
            )));
        }
        if self.n == 0 {
            return Err(CateError::InvalidParameter(format!("scenario {} has n = 0", self.id)));
        }
        Ok(())
    }
}

/// A simulated sample together with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedData {
    pub data: Dataset,
    pub tau_true: Array1<f64>,
    pub e_true: Array1<f64>,
}

impl SimulatedData {
    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Write `x1..xp,d,y,tau_true,e_true` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let p = self.data.p();
        let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        header.extend(["d", "y", "tau_true", "e_true"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.data.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.data.d[i].to_string());
            rec.push(self.data.y[i].to_string());
            rec.push(self.tau_true[i].to_string());
            rec.push(self.e_true[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Fixed parts of one scenario: correlation, index standardization and the
/// held-out test set, shared by every replication.
#[derive(Clone, Debug)]
pub struct ScenarioFrame {
    pub scenario: Scenario,
    pub corr: Array2<f64>,
    pub stats: Option<StandardizationStats>,
    pub test: SimulatedData,
    sampler: CovariateSampler,
}

impl ScenarioFrame {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let corr = generate_correlation(&CorrelationSpec {
            p: scenario.p,
            seed: scenario.corr_seed,
        })?;
        let sampler = CovariateSampler::new(&corr)?;
        let frame_seed = seed::derive(scenario.corr_seed, &format!("frame:{}", scenario.id));
        let stats = if scenario.propensity.constant().is_some() {
            None
        } else {
            let mut rng = seed::rng(seed::derive(frame_seed, "reference"));
            let reference = sampler.draw(REFERENCE_DRAW, &mut rng);
            let stats = StandardizationStats::estimate(reference.view(), scenario.propensity)?;
            if stats.is_some_and(|s| !(s.sd > 0.0)) {
                return Err(CateError::DegeneratePropensity);
            }
            stats
        };
        let mut frame = ScenarioFrame {
            scenario: scenario.clone(),
            corr,
            stats,
            test: SimulatedData {
                data: Dataset {
                    x: Array2::zeros((0, scenario.p)),
                    d: Array1::zeros(0),
                    y: Array1::zeros(0),
                },
                tau_true: Array1::zeros(0),
                e_true: Array1::zeros(0),
            },
            sampler,
        };
        let mut rng = seed::rng(seed::derive(frame_seed, "test"));
        frame.test = frame.sample(scenario.test_size, &mut rng)?;
        Ok(frame)
    }

    /// Training sample for one replication.
    pub fn draw_train(&self, seed: u64) -> Result<SimulatedData> {
        let mut rng = seed::rng(seed::derive(seed, &format!("train:{}", self.scenario.id)));
        self.sample(self.scenario.n, &mut rng)
    }

    /// Sample of arbitrary size from the scenario's model.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<SimulatedData> {
        let sc = &self.scenario;
        let x = self.sampler.draw(n, rng);
        let mut d = Array1::zeros(n);
        let mut y = Array1::zeros(n);
        let mut tau = Array1::zeros(n);
        let mut e = Array1::zeros(n);
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            let ei = propensity_score(row, sc.propensity, self.stats.as_ref())?;
            let di = if rng.random::<f64>() < ei { 1.0 } else { 0.0 };
            let ti = treatment_effect(row, sc.effect, sc.linear_reading, rng)?;
            let u: f64 = StandardNormal.sample(rng);
            y[i] = ti * di + baseline_g(row)? + u;
            d[i] = di;
            tau[i] = ti;
            e[i] = ei;
        }
        Ok(SimulatedData {
            data: Dataset::new(x, d, y)?,
            tau_true: tau,
            e_true: e,
        })
    }

    pub fn truth(&self) -> TrueNuisances {
        TrueNuisances {
            propensity: self.scenario.propensity,
            stats: self.stats,
            effect: self.scenario.effect,
            reading: self.scenario.linear_reading,
        }
    }
}

/// `(train, test)` for a scenario; the test set depends on the scenario only.
pub fn simulate(scenario: &Scenario, seed: u64) -> Result<(SimulatedData, SimulatedData)> {
    let frame = ScenarioFrame::new(scenario)?;
    let train = frame.draw_train(seed)?;
    Ok((train, frame.test))
}

/// Population nuisance functions of a scenario, usable in place of fitted
/// models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrueNuisances {
    pub propensity: PropensityFamily,
    pub stats: Option<StandardizationStats>,
    pub effect: EffectFamily,
    pub reading: LinearEffectReading,
}

impl TrueNuisances {
    fn map_rows(x: ArrayView2<f64>, f: impl Fn(ArrayView1<f64>) -> Result<f64>) -> Result<Array1<f64>> {
        x.rows()
            .into_iter()
            .map(f)
            .collect::<Result<Vec<_>>>()
            .map(Array1::from)
    }

    /// `E[Y | X, D = 0] = g(X)`
    pub fn mu0(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Self::map_rows(x, baseline_g)
    }

    /// `E[Y | X, D = 1] = g(X) + t(X)`
    pub fn mu1(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Self::map_rows(x, |r| Ok(baseline_g(r)? + effect_mean(r, self.effect, self.reading)?))
    }

    /// `E[Y | X] = g(X) + e(X) t(X)`
    pub fn mu(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Self::map_rows(x, |r| {
            let e = propensity_score(r, self.propensity, self.stats.as_ref())?;
            Ok(baseline_g(r)? + e * effect_mean(r, self.effect, self.reading)?)
        })
    }

    pub fn e(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Self::map_rows(x, |r| propensity_score(r, self.propensity, self.stats.as_ref()))
    }

    pub fn tau(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Self::map_rows(x, |r| effect_mean(r, self.effect, self.reading))
    }
}
