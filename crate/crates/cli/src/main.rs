use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use cate_cli::config::RunConfig;
use cate_cli::render::{render_file, Layout};
use cate_cli::runner;
use cate_core::dgp::ScenarioFrame;
use cate_core::{MetaLearner, Strategy};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cate", version, about = "Monte Carlo evaluation of CATE meta-learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation grid and write results.csv, runlog.csv and checkpoints.
    Run(RunArgs),
    /// Render results.csv as Markdown tables.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t)]
        layout: Layout,
    },
    /// Export one simulated training sample (or the scenario's test set) as CSV.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "out")]
        output: PathBuf,
        /// Sample size instead of the scenario default.
        #[arg(long)]
        n: Option<usize>,
        /// Write the fixed test set instead of a training sample.
        #[arg(long)]
        test: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; built-in defaults are used without it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    learners: Option<Vec<MetaLearner>>,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    b_iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Training sample size for every scenario.
    #[arg(long)]
    n: Option<usize>,
    /// Drop linear and lasso models from the learner set.
    #[arg(long)]
    exclude_linear: bool,
    #[arg(long = "out")]
    output_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Write the per-B MSE series of median strategies.
    #[arg(long)]
    emit_median_curve: bool,
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.scenarios {
            cfg.scenarios = v;
        }
        if let Some(v) = self.learners {
            cfg.learners = v;
        }
        if let Some(v) = self.strategies {
            cfg.strategies = v;
        }
        if let Some(v) = self.replications {
            cfg.replications = v;
        }
        if let Some(v) = self.b_iterations {
            cfg.b_iterations = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.test_size {
            cfg.test_size = v;
        }
        if self.n.is_some() {
            cfg.n_override = self.n;
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        if let Some(v) = self.workers {
            cfg.parallelism = v;
        }
        cfg.exclude_linear |= self.exclude_linear;
        cfg.emit_median_curve |= self.emit_median_curve;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = match args.into_config()?.validate() {
                Ok(cfg) => cfg,
                Err(errors) => {
                    for e in errors {
                        eprintln!("config error: {e}");
                    }
                    return Ok(ExitCode::from(2));
                }
            };
            let summary = runner::run(&cfg)?;
            eprintln!(
                "{} cells ({} resumed), {} failed replications; results in {}",
                summary.cells,
                summary.resumed,
                summary.failed_replications,
                cfg.output_dir.display()
            );
            if summary.success() {
                Ok(ExitCode::SUCCESS)
            } else {
                for cell in &summary.empty_cells {
                    eprintln!("no successful replication: {cell}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Render { input, output, layout } => {
            render_file(&input, &output, layout)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            scenario,
            seed,
            output,
            n,
            test,
        } => {
            let mut sc = cate_core::Scenario::catalog(&scenario)?;
            if let Some(n) = n {
                sc.n = n;
            }
            if !test {
                sc.test_size = 1;
            }
            let frame = ScenarioFrame::new(&sc)?;
            let sample = if test { frame.test } else { frame.draw_train(seed)? };
            sample
                .save_csv(&output)
                .with_context(|| format!("writing {}", output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
