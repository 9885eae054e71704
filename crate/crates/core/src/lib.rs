//! Conditional average treatment effect estimation with meta-learners,
//! sample splitting, cross-fitting and median aggregation, plus the
//! simulation designs and Monte Carlo metrics used to compare them.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dgp;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod learners;
pub mod metalearners;
pub mod seed;
pub mod splitter;

pub use data::Dataset;
pub use dgp::{Scenario, ScenarioFrame, SimulatedData, TrueNuisances};
pub use engine::{CateFit, CateModel, EngineConfig, NuisanceSource};
pub use ensemble::{LearnerConfig, StackedModel};
pub use error::{CateError, Result};
pub use evaluate::{EvalReport, MedianMseMode, PredictionCube};
pub use learners::{ClipBounds, LearnerSpec, Task};
pub use metalearners::MetaLearner;
pub use splitter::{FoldPlan, Strategy, StrategySpec};
