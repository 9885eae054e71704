use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context as _};
use cate_core::{MetaLearner, Strategy};
use serde::Deserialize;

use crate::runner::RESULTS_HEADER;

/// MSE values within this distance of the block minimum are all marked.
pub const TIE_TOLERANCE: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub learner: String,
    pub estimator: String,
    pub mean_mse: f64,
    pub mean_abs_bias: f64,
    pub mean_sd: f64,
    pub median_mse: f64,
    pub replications: usize,
}

/// How rows are grouped into tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Layout {
    /// One table per meta-learner, blocked by scenario.
    #[default]
    Learner,
    /// One table per scenario, blocked by meta-learner.
    Scenario,
}

pub fn read_results(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != RESULTS_HEADER {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    reader.deserialize().map(|r| r.map_err(anyhow::Error::from)).collect()
}

fn learner_label(id: &str) -> String {
    MetaLearner::from_str(id)
        .map(|m| m.label().to_string())
        .unwrap_or_else(|_| id.to_string())
}

fn strategy_label(id: &str) -> String {
    Strategy::from_str(id)
        .map(|s| s.label().to_string())
        .unwrap_or_else(|_| id.to_string())
}

fn number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        "n/a".into()
    }
}

/// Indices of the rows whose MSE is within the tie tolerance of the minimum.
pub fn lowest(rows: &[&ResultRow]) -> Vec<usize> {
    let min = rows
        .iter()
        .map(|r| r.mean_mse)
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Vec::new();
    }
    (0..rows.len())
        .filter(|&i| rows[i].mean_mse <= min + TIE_TOLERANCE)
        .collect()
}

fn unique<'a>(values: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

pub fn render(rows: &[ResultRow], layout: Layout) -> String {
    type Key = fn(&ResultRow) -> &str;
    let (outer, inner): (Key, Key) = match layout {
        Layout::Learner => (|r| &r.learner, |r| &r.scenario),
        Layout::Scenario => (|r| &r.scenario, |r| &r.learner),
    };
    let mut md = String::new();
    for table in unique(rows.iter().map(outer)) {
        let title = match layout {
            Layout::Learner => learner_label(table),
            Layout::Scenario => format!("Scenario {table}"),
        };
        let block_name = match layout {
            Layout::Learner => "Scenario",
            Layout::Scenario => "Learner",
        };
        writeln!(md, "## {title}\n").unwrap();
        writeln!(
            md,
            "| {block_name} | Estimator | MSE | \\|Bias\\| | SD | Median MSE | R |"
        )
        .unwrap();
        writeln!(md, "|---|---|---:|---:|---:|---:|---:|").unwrap();
        let in_table: Vec<&ResultRow> = rows.iter().filter(|r| outer(r) == table).collect();
        for block in unique(in_table.iter().map(|r| inner(r))) {
            let block_rows: Vec<&ResultRow> = in_table.iter().copied().filter(|r| inner(r) == block).collect();
            let marked = lowest(&block_rows);
            for (i, r) in block_rows.iter().enumerate() {
                let mse = number(r.mean_mse);
                let mse = if marked.contains(&i) { format!("**{mse}**") } else { mse };
                let block_cell = match layout {
                    Layout::Learner => block.to_string(),
                    Layout::Scenario => learner_label(block),
                };
                writeln!(
                    md,
                    "| {} | {} | {} | {} | {} | {} | {} |",
                    if i == 0 { block_cell } else { String::new() },
                    strategy_label(&r.estimator),
                    mse,
                    number(r.mean_abs_bias),
                    number(r.mean_sd),
                    number(r.median_mse),
                    r.replications
                )
                .unwrap();
            }
        }
        md.push('\n');
    }
    md
}

pub fn render_file(input: &Path, output: &Path, layout: Layout) -> anyhow::Result<()> {
    let rows = read_results(input)?;
    std::fs::write(output, render(&rows, layout)).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}
