use std::path::{Path, PathBuf};

use cate_core::dgp::{LinearEffectReading, Scenario, SCENARIO_IDS};
use cate_core::{LearnerConfig, MedianMseMode, MetaLearner, Strategy};
use serde::{Deserialize, Serialize};

/// Monte Carlo run description, read from a TOML file and overridable from
/// the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: Vec<String>,
    pub learners: Vec<MetaLearner>,
    pub strategies: Vec<Strategy>,
    pub replications: usize,
    pub b_iterations: usize,
    pub seed: u64,
    pub exclude_linear: bool,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub parallelism: usize,
    pub test_size: usize,
    /// Training sample size for every scenario instead of the catalog value.
    pub n_override: Option<usize>,
    pub linear_reading: LinearEffectReading,
    pub median_mse_mode: MedianMseMode,
    pub emit_median_curve: bool,
    pub learner_config: LearnerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenarios: SCENARIO_IDS.iter().map(|s| s.to_string()).collect(),
            learners: MetaLearner::ALL.to_vec(),
            strategies: Strategy::ALL.to_vec(),
            replications: 30,
            b_iterations: 20,
            seed: 1,
            exclude_linear: false,
            output_dir: PathBuf::from("out"),
            parallelism: 0,
            test_size: 2000,
            n_override: None,
            linear_reading: LinearEffectReading::default(),
            median_mse_mode: MedianMseMode::default(),
            emit_median_curve: false,
            learner_config: LearnerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Check every field and return all problems at once.
    pub fn validate(self) -> Result<RunConfig, Vec<String>> {
        let mut errors = Vec::new();
        if self.scenarios.is_empty() {
            errors.push("scenarios: at least one scenario is required".to_string());
        }
        for id in &self.scenarios {
            if Scenario::catalog(id).is_err() {
                errors.push(format!("scenarios: unknown scenario id `{id}` (expected A-L)"));
            }
        }
        if self.learners.is_empty() {
            errors.push("learners: at least one meta-learner is required".to_string());
        }
        if self.strategies.is_empty() {
            errors.push("strategies: at least one strategy is required".to_string());
        }
        // Unsupported pairs inside a larger grid are skipped; a strategy that
        // none of the requested learners supports is an error.
        for strategy in &self.strategies {
            if !self.learners.is_empty() && !self.learners.iter().any(|l| strategy.supports(*l)) {
                for learner in &self.learners {
                    errors.push(format!(
                        "strategies: {} cannot be combined with {} (no propensity model)",
                        learner.label(),
                        strategy.id()
                    ));
                }
            }
        }
        if self.replications == 0 {
            errors.push("replications: must be at least 1".to_string());
        }
        if self.b_iterations == 0 && self.strategies.iter().any(|s| s.is_median()) {
            errors.push("b_iterations: median strategies need at least 1 iteration".to_string());
        }
        if self.test_size == 0 {
            errors.push("test_size: must be at least 1".to_string());
        }
        if self.n_override == Some(0) {
            errors.push("n_override: must be at least 1".to_string());
        }
        if let Err(e) = self.effective_learner_config().validate() {
            errors.push(format!("learner_config: {e}"));
        }
        if errors.is_empty() {
            Ok(self)
        } else {
            Err(errors)
        }
    }

    pub fn effective_learner_config(&self) -> LearnerConfig {
        LearnerConfig {
            exclude_linear: self.exclude_linear || self.learner_config.exclude_linear,
            ..self.learner_config.clone()
        }
    }

    /// Catalog scenario with this run's sample-size overrides applied.
    pub fn scenario(&self, id: &str) -> cate_core::Result<Scenario> {
        let base = Scenario::catalog(id)?;
        Ok(Scenario {
            n: self.n_override.unwrap_or(base.n),
            test_size: self.test_size,
            linear_reading: self.linear_reading,
            ..base
        })
    }
}
