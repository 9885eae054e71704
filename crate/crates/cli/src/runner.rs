use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context as _;
use cate_core::dgp::ScenarioFrame;
use cate_core::engine::{self, EngineConfig, FitRecord};
use cate_core::evaluate::{aggregate_with, PredictionCube};
use cate_core::{seed, MetaLearner, Strategy, StrategySpec};
use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const RESULTS_FILE: &str = "results.csv";
pub const RUNLOG_FILE: &str = "runlog.csv";
pub const CONFIG_ECHO_FILE: &str = "config_echo.toml";
pub const MEDIAN_CURVE_FILE: &str = "median_curve.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub const RESULTS_HEADER: [&str; 8] = [
    "scenario",
    "learner",
    "estimator",
    "mean_mse",
    "mean_abs_bias",
    "mean_sd",
    "median_mse",
    "replications",
];

/// One (scenario, learner, strategy) combination of the grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub scenario: String,
    pub learner: MetaLearner,
    pub strategy: Strategy,
}

impl CellKey {
    pub fn name(&self) -> String {
        format!("{}/{}/{}", self.scenario, self.learner.id(), self.strategy.id())
    }

    pub fn seed(&self, master: u64) -> u64 {
        seed::derive(master, &format!("cell:{}", self.name()))
    }

    fn file_name(&self) -> String {
        format!("{}_{}_{}.json", self.scenario, self.learner.id(), self.strategy.id())
    }
}

/// Seed of the training sample for replication `r` of a scenario. Every cell
/// of the scenario sees the same training sets.
pub fn data_seed(master: u64, scenario: &str, r: usize) -> u64 {
    seed::derive_index(
        seed::derive(master, &format!("data:{scenario}")),
        "replication",
        r as u64,
    )
}

pub fn replication_seed(cell_seed: u64, r: usize) -> u64 {
    seed::derive_index(cell_seed, "replication", r as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_mse: f64,
    pub mean_abs_bias: f64,
    pub mean_sd: f64,
    pub median_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub replication: usize,
    pub status: String,
    pub iteration: Option<usize>,
    pub rotation: Option<usize>,
    pub fold_seed: Option<u64>,
    pub final_rows: Option<usize>,
    pub psi_mean: Option<f64>,
    pub psi_sd: Option<f64>,
    pub weights: String,
    pub message: String,
}

/// Everything a finished cell contributes to the output files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub fingerprint: u64,
    pub successes: usize,
    pub failures: usize,
    pub metrics: Option<Metrics>,
    pub median_curve: Option<Vec<f64>>,
    pub log: Vec<LogRow>,
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub cells: usize,
    pub resumed: usize,
    /// Cells without a single successful replication.
    pub empty_cells: Vec<String>,
    pub failed_replications: usize,
}

impl RunSummary {
    pub fn success(&self) -> bool {
        self.empty_cells.is_empty()
    }
}

pub fn cells(cfg: &RunConfig) -> Vec<CellKey> {
    let mut out = Vec::new();
    for scenario in &cfg.scenarios {
        for &learner in &cfg.learners {
            for &strategy in &cfg.strategies {
                if strategy.supports(learner) {
                    out.push(CellKey {
                        scenario: scenario.to_ascii_uppercase(),
                        learner,
                        strategy,
                    });
                }
            }
        }
    }
    out
}

/// Hash of every setting that changes a cell's numbers; checkpoints written
/// under a different fingerprint are recomputed.
pub fn fingerprint(cfg: &RunConfig) -> u64 {
    let relevant = serde_json::json!({
        "seed": cfg.seed,
        "replications": cfg.replications,
        "b_iterations": cfg.b_iterations,
        "test_size": cfg.test_size,
        "n_override": cfg.n_override,
        "linear_reading": cfg.linear_reading,
        "median_mse_mode": cfg.median_mse_mode,
        "emit_median_curve": cfg.emit_median_curve,
        "learners": cfg.effective_learner_config(),
    });
    seed::derive(0, &relevant.to_string())
}

fn format_weights(weights: &[(&'static str, Vec<f64>)]) -> String {
    weights
        .iter()
        .map(|(name, w)| {
            let values: Vec<String> = w.iter().map(|v| format!("{v:.4}")).collect();
            format!("{name}={}", values.join("|"))
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn record_row(r: usize, rec: &FitRecord) -> LogRow {
    LogRow {
        replication: r,
        status: "ok".into(),
        iteration: Some(rec.iteration),
        rotation: Some(rec.rotation),
        fold_seed: Some(rec.fold_seed),
        final_rows: Some(rec.final_rows),
        psi_mean: Some(rec.psi_mean),
        psi_sd: Some(rec.psi_sd),
        weights: format_weights(&rec.weights),
        message: String::new(),
    }
}

fn failure_row(r: usize, status: &str, iteration: Option<usize>, message: String) -> LogRow {
    LogRow {
        replication: r,
        status: status.into(),
        iteration,
        rotation: None,
        fold_seed: None,
        final_rows: None,
        psi_mean: None,
        psi_sd: None,
        weights: String::new(),
        message,
    }
}

type Attempt = (Array1<f64>, Option<Vec<f64>>, Vec<LogRow>);

struct Replication {
    prediction: Option<Array1<f64>>,
    curve: Option<Vec<f64>>,
    log: Vec<LogRow>,
}

fn run_replication(cfg: &RunConfig, frame: &ScenarioFrame, key: &CellKey, r: usize) -> Replication {
    let attempt = || -> cate_core::Result<Attempt> {
        let train = frame.draw_train(data_seed(cfg.seed, &key.scenario, r))?;
        let spec = StrategySpec::new(key.strategy, cfg.b_iterations)?;
        let engine_cfg = EngineConfig::learned(cfg.effective_learner_config());
        let fit = engine::fit(
            &train.data,
            key.learner,
            spec,
            &engine_cfg,
            replication_seed(key.seed(cfg.seed), r),
        )?;
        let x_test = frame.test.data.x.view();
        let prediction = fit.predict(x_test)?;
        let curve = if cfg.emit_median_curve && key.strategy.is_median() {
            Some(engine::median_curve(&fit.model, x_test, &frame.test.tau_true)?)
        } else {
            None
        };
        let mut log: Vec<LogRow> = fit.trace.records.iter().map(|rec| record_row(r, rec)).collect();
        log.extend(
            fit.trace
                .failed_iterations
                .iter()
                .map(|(b, msg)| failure_row(r, "iteration_failed", Some(*b), msg.clone())),
        );
        Ok((prediction, curve, log))
    };
    match attempt() {
        Ok((prediction, curve, log)) => Replication {
            prediction: Some(prediction),
            curve,
            log,
        },
        Err(e) => Replication {
            prediction: None,
            curve: None,
            log: vec![failure_row(r, "failed", None, e.to_string())],
        },
    }
}

/// Run all replications of one cell.
pub fn run_cell(cfg: &RunConfig, frame: &ScenarioFrame, key: &CellKey) -> anyhow::Result<CellResult> {
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, frame, key, r))
        .collect();
    let predictions: Vec<Array1<f64>> = reps.iter().filter_map(|rep| rep.prediction.clone()).collect();
    let successes = predictions.len();
    let metrics = if predictions.is_empty() {
        None
    } else {
        let cube = PredictionCube::from_rows(&predictions, frame.test.tau_true.clone())
            .with_context(|| format!("cell {}", key.name()))?;
        let report = aggregate_with(&cube, cfg.median_mse_mode);
        Some(Metrics {
            mean_mse: report.mean_mse,
            mean_abs_bias: report.mean_abs_bias,
            mean_sd: report.mean_sd,
            median_mse: report.median_mse,
        })
    };
    let curves: Vec<&Vec<f64>> = reps.iter().filter_map(|rep| rep.curve.as_ref()).collect();
    let median_curve = if curves.is_empty() {
        None
    } else {
        let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
        Some(
            (0..len)
                .map(|b| curves.iter().map(|c| c[b]).sum::<f64>() / curves.len() as f64)
                .collect(),
        )
    };
    Ok(CellResult {
        key: key.clone(),
        fingerprint: fingerprint(cfg),
        successes,
        failures: cfg.replications - successes,
        metrics,
        median_curve,
        log: reps.into_iter().flat_map(|rep| rep.log).collect(),
    })
}

fn checkpoint_path(out: &Path, key: &CellKey) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(key.file_name())
}

fn load_checkpoint(path: &Path, key: &CellKey, fingerprint: u64) -> Option<CellResult> {
    let text = fs::read_to_string(path).ok()?;
    let cell: CellResult = serde_json::from_str(&text).ok()?;
    (cell.key == *key && cell.fingerprint == fingerprint).then_some(cell)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Execute the whole grid, skipping cells with a valid checkpoint, and write
/// the output files.
pub fn run(cfg: &RunConfig) -> anyhow::Result<RunSummary> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out.join(CHECKPOINT_DIR)).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(CONFIG_ECHO_FILE), cfg.to_toml())?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.parallelism).build()?;
    let keys = cells(cfg);
    let fp = fingerprint(cfg);
    let done = AtomicUsize::new(0);
    let resumed = AtomicUsize::new(0);
    let total = keys.len();

    let results: Vec<CellResult> = pool.install(|| -> anyhow::Result<Vec<CellResult>> {
        let mut results = Vec::with_capacity(total);
        for scenario in &cfg.scenarios {
            let id = scenario.to_ascii_uppercase();
            let scenario_keys: Vec<&CellKey> = keys.iter().filter(|k| k.scenario == id).collect();
            if scenario_keys.is_empty() {
                continue;
            }
            let pending: Vec<bool> = scenario_keys
                .iter()
                .map(|k| load_checkpoint(&checkpoint_path(out, k), k, fp).is_none())
                .collect();
            let frame = if pending.iter().any(|&p| p) {
                Some(ScenarioFrame::new(&cfg.scenario(&id)?)?)
            } else {
                None
            };
            let chunk: Vec<CellResult> = scenario_keys
                .par_iter()
                .map(|key| -> anyhow::Result<CellResult> {
                    let path = checkpoint_path(out, key);
                    let (cell, from_checkpoint) = match load_checkpoint(&path, key, fp) {
                        Some(cell) => (cell, true),
                        None => {
                            let frame = frame.as_ref().expect("frame built for pending cells");
                            let cell = run_cell(cfg, frame, key)?;
                            write_atomic(&path, serde_json::to_string(&cell)?.as_bytes())?;
                            (cell, false)
                        }
                    };
                    if from_checkpoint {
                        resumed.fetch_add(1, Ordering::Relaxed);
                    }
                    let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                    eprintln!(
                        "[{k}/{total}] {} {} ({} ok, {} failed)",
                        key.name(),
                        if from_checkpoint { "resumed" } else { "done" },
                        cell.successes,
                        cell.failures
                    );
                    Ok(cell)
                })
                .collect::<anyhow::Result<_>>()?;
            results.extend(chunk);
        }
        Ok(results)
    })?;

    write_results(&out.join(RESULTS_FILE), &results)?;
    write_runlog(&out.join(RUNLOG_FILE), &results)?;
    if cfg.emit_median_curve {
        write_median_curve(&out.join(MEDIAN_CURVE_FILE), &results)?;
    }
    Ok(RunSummary {
        cells: results.len(),
        resumed: resumed.into_inner(),
        empty_cells: results
            .iter()
            .filter(|c| c.successes == 0)
            .map(|c| c.key.name())
            .collect(),
        failed_replications: results.iter().map(|c| c.failures).sum(),
    })
}

fn float(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NaN".into()
    }
}

pub fn write_results(path: &Path, cells: &[CellResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for cell in cells {
        let m = cell.metrics.clone().unwrap_or(Metrics {
            mean_mse: f64::NAN,
            mean_abs_bias: f64::NAN,
            mean_sd: f64::NAN,
            median_mse: f64::NAN,
        });
        w.write_record([
            cell.key.scenario.clone(),
            cell.key.learner.id().to_string(),
            cell.key.strategy.id().to_string(),
            float(m.mean_mse),
            float(m.mean_abs_bias),
            float(m.mean_sd),
            float(m.median_mse),
            cell.successes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_runlog(path: &Path, cells: &[CellResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "learner",
        "estimator",
        "replication",
        "status",
        "iteration",
        "rotation",
        "fold_seed",
        "final_rows",
        "psi_mean",
        "psi_sd",
        "weights",
        "message",
    ])?;
    for cell in cells {
        for row in &cell.log {
            w.write_record([
                cell.key.scenario.clone(),
                cell.key.learner.id().to_string(),
                cell.key.strategy.id().to_string(),
                row.replication.to_string(),
                row.status.clone(),
                opt(row.iteration),
                opt(row.rotation),
                opt(row.fold_seed),
                opt(row.final_rows),
                opt(row.psi_mean),
                opt(row.psi_sd),
                row.weights.clone(),
                row.message.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_median_curve(path: &Path, cells: &[CellResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "learner", "estimator", "b", "mse"])?;
    for cell in cells {
        if let Some(curve) = &cell.median_curve {
            for (b, mse) in curve.iter().enumerate() {
                w.write_record([
                    cell.key.scenario.clone(),
                    cell.key.learner.id().to_string(),
                    cell.key.strategy.id().to_string(),
                    (b + 1).to_string(),
                    float(*mse),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
