//! Monte Carlo driver for the CATE estimators in `cate-core`: run
//! configuration, the experiment grid runner and Markdown table rendering.

pub mod config;
pub mod render;
pub mod runner;

pub use config::RunConfig;
pub use render::{render, render_file, Layout};
pub use runner::{run, RunSummary};
