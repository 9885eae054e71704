use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::canonical_order;
use super::tree::{BinnedFeatures, Tree, TreeParams};
use crate::error::{CateError, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    /// Resample rows with replacement for each tree.
    pub bootstrap: bool,
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            bootstrap: true,
            max_bins: 64,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.mtry == Some(0) || self.max_bins < 2 {
            return Err(CateError::InvalidParameter(
                "forest: n_trees, min_leaf, mtry and max_bins must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub(crate) fn fit(
        params: &ForestParams,
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
        let p = xs.ncols();
        let binned = BinnedFeatures::new(xs.view(), params.max_bins);
        let tree_params = TreeParams {
            max_depth: params.max_depth.unwrap_or(usize::MAX),
            min_leaf: params.min_leaf,
            mtry: params.mtry.unwrap_or(p.div_ceil(3)).max(1),
            l2: 0.0,
        };
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = seed::rng(seed::derive_index(seed_, "tree", t as u64));
                let rows: Vec<u32> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n) as u32).collect()
                } else {
                    (0..n as u32).collect()
                };
                Tree::grow(&binned, &target, &weight, rows, &tree_params, &mut rng)
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let k = self.trees.len() as f64;
        x.rows()
            .into_iter()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / k)
            .collect()
    }
}
