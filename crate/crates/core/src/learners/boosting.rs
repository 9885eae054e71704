use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::tree::{BinnedFeatures, Tree, TreeParams};
use super::{canonical_order, weighted_mean};
use crate::error::{CateError, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub holdout_fraction: f64,
    /// Rounds without holdout improvement before stopping.
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        Self {
            holdout_fraction: 0.2,
            patience: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostingParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// L2 penalty on leaf values.
    pub l2: f64,
    pub early_stopping: Option<EarlyStopping>,
    pub max_bins: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_rounds: 200,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 1,
            l2: 1.0,
            early_stopping: Some(EarlyStopping::default()),
            max_bins: 64,
        }
    }
}

impl BoostingParams {
    pub fn validate(&self) -> Result<()> {
        let ok_es = self
            .early_stopping
            .is_none_or(|e| e.holdout_fraction > 0.0 && e.holdout_fraction < 1.0 && e.patience > 0);
        if self.n_rounds == 0
            || self.min_leaf == 0
            || self.max_bins < 2
            || !(self.learning_rate >= 0.0 && self.learning_rate <= 1.0)
            || !(self.l2 >= 0.0)
            || !ok_es
        {
            return Err(CateError::InvalidParameter("boosting: invalid hyperparameters".into()));
        }
        Ok(())
    }
}

/// Squared-loss gradient boosting with depth-limited trees.
#[derive(Clone, Debug)]
pub struct BoostedModel {
    base: f64,
    trees: Vec<Tree>,
    /// Weighted training loss before the first round and after each kept round.
    train_loss: Vec<f64>,
}

impl BoostedModel {
    pub(crate) fn fit(
        params: &BoostingParams,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        w: ArrayView1<f64>,
        seed_: u64,
    ) -> Result<Self> {
        let order = canonical_order(x, y, w);
        let xs = x.select(Axis(0), &order);
        let target: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let weight: Vec<f64> = order.iter().map(|&i| w[i]).collect();
        let n = xs.nrows();
        let base = weighted_mean(ArrayView1::from(&target), ArrayView1::from(&weight));

        let mut rows: Vec<u32> = (0..n as u32).collect();
        let mut holdout: Vec<u32> = Vec::new();
        let mut patience = usize::MAX;
        if let Some(es) = params.early_stopping {
            let n_hold = (es.holdout_fraction * n as f64).floor() as usize;
            if n_hold >= 2 && n - n_hold >= 2 {
                rows.shuffle(&mut seed::rng(seed::derive(seed_, "holdout")));
                holdout = rows.split_off(n - n_hold);
                rows.sort_unstable();
                holdout.sort_unstable();
                patience = es.patience;
            }
        }

        let binned = BinnedFeatures::new(xs.view(), params.max_bins);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            mtry: usize::MAX,
            l2: params.l2,
        };
        let mut pred = vec![base; n];
        let mut resid = vec![0.0; n];
        let loss = |pred: &[f64], set: &[u32]| -> f64 {
            let (mut num, mut den) = (0.0, 0.0);
            for &r in set {
                let r = r as usize;
                num += weight[r] * (target[r] - pred[r]).powi(2);
                den += weight[r];
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        };
        let mut train_loss = vec![loss(&pred, &rows)];
        let mut best_loss = loss(&pred, &holdout);
        let mut best_rounds = 0usize;
        let mut trees = Vec::new();
        let mut rng = seed::rng(seed::derive(seed_, "boost"));
        for round in 0..params.n_rounds {
            for &r in &rows {
                let r = r as usize;
                resid[r] = target[r] - pred[r];
            }
            let mut tree = Tree::grow(&binned, &resid, &weight, rows.clone(), &tree_params, &mut rng);
            tree.scale_leaves(params.learning_rate);
            for (i, row) in xs.axis_iter(Axis(0)).enumerate() {
                pred[i] += tree.predict_row(row);
            }
            trees.push(tree);
            train_loss.push(loss(&pred, &rows));
            if !holdout.is_empty() {
                let h = loss(&pred, &holdout);
                if h < best_loss {
                    best_loss = h;
                    best_rounds = round + 1;
                } else if round + 1 - best_rounds >= patience {
                    break;
                }
            } else {
                best_rounds = round + 1;
            }
        }
        trees.truncate(best_rounds);
        train_loss.truncate(best_rounds + 1);
        Ok(Self {
            base,
            trees,
            train_loss,
        })
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn base_score(&self) -> f64 {
        self.base
    }

    pub fn train_loss(&self) -> &[f64] {
        &self.train_loss
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.base + self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>())
            .collect()
    }
}
