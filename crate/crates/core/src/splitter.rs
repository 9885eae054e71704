//! Fold partitions and the role each fold plays under the twelve
//! splitting / cross-fitting / median strategies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CateError, Result};
use crate::metalearners::MetaLearner;
use crate::seed;

/// Balanced random partition of `0..n` into `k` folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

pub fn make_folds(n: usize, k: usize, seed_: u64) -> Result<FoldPlan> {
    if k == 0 || n < k {
        return Err(CateError::InvalidParameter(format!(
            "cannot split {n} rows into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_));
    let mut assignment = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan { k, assignment })
}

impl FoldPlan {
    pub fn from_assignment(k: usize, assignment: Vec<usize>) -> Result<Self> {
        if k == 0 || assignment.iter().any(|&f| f >= k) {
            return Err(CateError::InvalidParameter("fold index out of range".into()));
        }
        Ok(Self { k, assignment })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Ascending row indices of fold `f`.
    pub fn fold_rows(&self, f: usize) -> Vec<usize> {
        self.rows_in(&[f])
    }

    /// Ascending row indices belonging to any of `folds`.
    pub fn rows_in(&self, folds: &[usize]) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, f)| folds.contains(f))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignment {
            s[f] += 1;
        }
        s
    }

    /// Same partition with fold `f` renamed to `mapping[f]`.
    pub fn relabel(&self, mapping: &[usize]) -> Result<FoldPlan> {
        let mut seen = vec![false; self.k];
        if mapping.len() != self.k {
            return Err(CateError::InvalidParameter("relabel mapping has wrong length".into()));
        }
        for &m in mapping {
            if m >= self.k || seen[m] {
                return Err(CateError::InvalidParameter(
                    "relabel mapping is not a permutation".into(),
                ));
            }
            seen[m] = true;
        }
        Ok(FoldPlan {
            k: self.k,
            assignment: self.assignment.iter().map(|&f| mapping[f]).collect(),
        })
    }

    /// `row,fold` audit dump.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "fold"])?;
        for (i, f) in self.assignment.iter().enumerate() {
            w.write_record([i.to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How the sample is partitioned before any fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partition {
    /// Whole sample for every step.
    None,
    /// Two equal halves.
    Half,
    /// Three folds with a dedicated fold per nuisance group.
    Double,
    /// Five folds; four train, one estimates.
    FiveFold,
}

impl Partition {
    pub fn k(self) -> usize {
        match self {
            Partition::None => 1,
            Partition::Half => 2,
            Partition::Double => 3,
            Partition::FiveFold => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregation {
    /// One rotation.
    Single,
    /// Every fold estimates once; fold models are averaged.
    CrossFit,
    /// Out-of-fold pseudo-outcomes for all rows, one final regression.
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Naive,
    Split5050,
    Split5050Cf,
    DoubleSplit,
    DoubleSplitCf,
    Fold5,
    Fold5Cf,
    Fold5Combined,
    MedianSplit5050Cf,
    MedianDoubleSplitCf,
    MedianFold5Cf,
    MedianFold5Combined,
}

impl Strategy {
    pub const ALL: [Strategy; 12] = [
        Strategy::Naive,
        Strategy::Split5050,
        Strategy::Split5050Cf,
        Strategy::DoubleSplit,
        Strategy::DoubleSplitCf,
        Strategy::Fold5,
        Strategy::Fold5Cf,
        Strategy::Fold5Combined,
        Strategy::MedianSplit5050Cf,
        Strategy::MedianDoubleSplitCf,
        Strategy::MedianFold5Cf,
        Strategy::MedianFold5Combined,
    ];

    pub fn partition(self) -> Partition {
        use Strategy::*;
        match self {
            Naive => Partition::None,
            Split5050 | Split5050Cf | MedianSplit5050Cf => Partition::Half,
            DoubleSplit | DoubleSplitCf | MedianDoubleSplitCf => Partition::Double,
            Fold5 | Fold5Cf | Fold5Combined | MedianFold5Cf | MedianFold5Combined => Partition::FiveFold,
        }
    }

    pub fn k(self) -> usize {
        self.partition().k()
    }

    pub fn aggregation(self) -> Aggregation {
        use Strategy::*;
        match self {
            Naive | Split5050 | DoubleSplit | Fold5 => Aggregation::Single,
            Split5050Cf | DoubleSplitCf | Fold5Cf | MedianSplit5050Cf | MedianDoubleSplitCf | MedianFold5Cf => {
                Aggregation::CrossFit
            }
            Fold5Combined | MedianFold5Combined => Aggregation::Combined,
        }
    }

    pub fn is_median(self) -> bool {
        use Strategy::*;
        matches!(
            self,
            MedianSplit5050Cf | MedianDoubleSplitCf | MedianFold5Cf | MedianFold5Combined
        )
    }

    /// The strategy a median strategy repeats; identity otherwise.
    pub fn inner(self) -> Strategy {
        use Strategy::*;
        match self {
            MedianSplit5050Cf => Split5050Cf,
            MedianDoubleSplitCf => DoubleSplitCf,
            MedianFold5Cf => Fold5Cf,
            MedianFold5Combined => Fold5Combined,
            s => s,
        }
    }

    /// The T-learner has no propensity model, so double splitting and the
    /// combined pseudo-outcome do not apply to it.
    pub fn supports(self, learner: MetaLearner) -> bool {
        match learner {
            MetaLearner::T => self.partition() != Partition::Double && self.aggregation() != Aggregation::Combined,
            _ => true,
        }
    }

    pub fn id(self) -> &'static str {
        use Strategy::*;
        match self {
            Naive => "naive",
            Split5050 => "split5050",
            Split5050Cf => "split5050_cf",
            DoubleSplit => "double_split",
            DoubleSplitCf => "double_split_cf",
            Fold5 => "fold5",
            Fold5Cf => "fold5_cf",
            Fold5Combined => "fold5_combined",
            MedianSplit5050Cf => "median_split5050_cf",
            MedianDoubleSplitCf => "median_double_split_cf",
            MedianFold5Cf => "median_fold5_cf",
            MedianFold5Combined => "median_fold5_combined",
        }
    }

    /// Row label used in rendered tables.
    pub fn label(self) -> &'static str {
        use Strategy::*;
        match self {
            Naive => "naive",
            Split5050 => "50:50",
            Split5050Cf => "50:50 cross-fit",
            DoubleSplit => "double split",
            DoubleSplitCf => "double split cross-fit",
            Fold5 => "5-fold",
            Fold5Cf => "5-fold cross-fit",
            Fold5Combined => "5-fold combined",
            MedianSplit5050Cf => "50:50 cross-fit median",
            MedianDoubleSplitCf => "double split cross-fit median",
            MedianFold5Cf => "5-fold cross-fit median",
            MedianFold5Combined => "5-fold combined median",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Strategy {
    type Err = CateError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.id() == key)
            .ok_or_else(|| CateError::InvalidParameter(format!("unknown strategy `{s}`")))
    }
}

/// A strategy plus the repetition count used by median strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StrategySpec {
    pub name: Strategy,
    pub b_iterations: usize,
}

impl StrategySpec {
    pub fn new(name: Strategy, b_iterations: usize) -> Result<Self> {
        if name.is_median() && b_iterations == 0 {
            return Err(CateError::InvalidParameter(
                "median strategies need at least one iteration".into(),
            ));
        }
        Ok(Self { name, b_iterations })
    }
}

/// Folds used by each nuisance group in one rotation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleAssignment {
    /// Conditional mean models (`mu0`, `mu1` or pooled `mu`).
    pub outcome: Vec<usize>,
    pub propensity: Vec<usize>,
    /// Pseudo-outcome computation and final regression.
    pub estimation: Vec<usize>,
}

/// Role assignments for each rotation of `strategy` over `plan`.
///
/// Rotation `r` estimates on fold `(r + k - 1) mod k`, so single-shot
/// strategies estimate on the last fold. Double splitting trains the outcome
/// models on fold `r` and the propensity on fold `r + 1`.
pub fn rotations(plan: &FoldPlan, strategy: Strategy) -> Result<Vec<RoleAssignment>> {
    let k = strategy.k();
    if plan.k() != k {
        return Err(CateError::Incompatible(format!(
            "strategy {strategy} needs {k} folds, plan has {}",
            plan.k()
        )));
    }
    let count = match strategy.aggregation() {
        Aggregation::Single => 1,
        Aggregation::CrossFit | Aggregation::Combined => k,
    };
    let out = (0..count)
        .map(|r| match strategy.partition() {
            Partition::None => RoleAssignment {
                outcome: vec![0],
                propensity: vec![0],
                estimation: vec![0],
            },
            Partition::Double => RoleAssignment {
                outcome: vec![r % 3],
                propensity: vec![(r + 1) % 3],
                estimation: vec![(r + 2) % 3],
            },
            Partition::Half | Partition::FiveFold => {
                let est = (r + k - 1) % k;
                let train: Vec<usize> = (0..k).filter(|&f| f != est).collect();
                RoleAssignment {
                    outcome: train.clone(),
                    propensity: train,
                    estimation: vec![est],
                }
            }
        })
        .collect();
    Ok(out)
}
