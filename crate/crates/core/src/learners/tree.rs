//! Histogram-based weighted regression trees shared by the forest and the
//! boosting learner.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;

use crate::seed::Rng;

const LEAF: u32 = u32::MAX;

/// Per-feature bin thresholds and the binned training matrix
/// (column-major). A value falls in bin `b` when it is greater than
/// `edges[b - 1]` and at most `edges[b]`.
pub(crate) struct BinnedFeatures {
    pub edges: Vec<Vec<f64>>,
    pub bins: Vec<Vec<u8>>,
}

impl BinnedFeatures {
    pub fn new(x: ArrayView2<f64>, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let mut edges = Vec::with_capacity(x.ncols());
        let mut bins = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mut sorted: Vec<f64> = col.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let e: Vec<f64> = if sorted.len() <= max_bins {
                sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut e: Vec<f64> = (1..max_bins)
                    .map(|k| {
                        let pos = k * sorted.len() / max_bins;
                        0.5 * (sorted[pos - 1] + sorted[pos])
                    })
                    .collect();
                e.dedup();
                e
            };
            bins.push(col.iter().map(|&v| bin_of(&e, v)).collect());
            edges.push(e);
        }
        Self { edges, bins }
    }

    pub fn n_features(&self) -> usize {
        self.edges.len()
    }
}

fn bin_of(edges: &[f64], v: f64) -> u8 {
    edges.partition_point(|&e| e < v) as u8
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; `>= n_features` means all.
    pub mtry: usize,
    pub l2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

/// Fitted binary regression tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.feature == LEAF {
                return node.value;
            }
            i = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            let n = &nodes[i];
            if n.feature == LEAF {
                0
            } else {
                1 + walk(nodes, n.left as usize).max(walk(nodes, n.right as usize))
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if n.feature == LEAF {
                n.value *= factor;
            }
        }
    }

    /// Grow a tree on `rows` (duplicates allowed, e.g. a bootstrap sample).
    pub(crate) fn grow(
        binned: &BinnedFeatures,
        target: &[f64],
        weight: &[f64],
        rows: Vec<u32>,
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Tree {
        let mut builder = Builder {
            binned,
            target,
            weight,
            params,
            nodes: Vec::new(),
            features: (0..binned.n_features()).collect(),
        };
        builder.build(rows, 0, rng);
        Tree { nodes: builder.nodes }
    }
}

struct Split {
    feature: usize,
    bin: u8,
    gain: f64,
}

struct Builder<'a> {
    binned: &'a BinnedFeatures,
    target: &'a [f64],
    weight: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
    features: Vec<usize>,
}

impl Builder<'_> {
    fn build(&mut self, rows: Vec<u32>, depth: usize, rng: &mut Rng) -> u32 {
        let (mut sw, mut sy) = (0.0, 0.0);
        for &r in &rows {
            let w = self.weight[r as usize];
            sw += w;
            sy += w * self.target[r as usize];
        }
        let denom = sw + self.params.l2;
        let value = if denom > 0.0 { sy / denom } else { 0.0 };
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        });
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf || !(sw > 0.0) {
            return id;
        }
        let Some(split) = self.best_split(&rows, sw, sy, rng) else {
            return id;
        };
        let col = &self.binned.bins[split.feature];
        let (left, right): (Vec<u32>, Vec<u32>) = rows.into_iter().partition(|&r| col[r as usize] <= split.bin);
        let threshold = self.binned.edges[split.feature][split.bin as usize];
        let l = self.build(left, depth + 1, rng);
        let r = self.build(right, depth + 1, rng);
        let node = &mut self.nodes[id as usize];
        node.feature = split.feature as u32;
        node.threshold = threshold;
        node.left = l;
        node.right = r;
        id
    }

    fn candidate_features(&mut self, rng: &mut Rng) -> Vec<usize> {
        let p = self.features.len();
        if self.params.mtry >= p {
            self.features.clone()
        } else {
            let mut f: Vec<usize> = sample(rng, p, self.params.mtry).into_iter().collect();
            f.sort_unstable();
            f
        }
    }

    fn best_split(&mut self, rows: &[u32], sw: f64, sy: f64, rng: &mut Rng) -> Option<Split> {
        let l2 = self.params.l2;
        let min_leaf = self.params.min_leaf;
        let parent = sy * sy / (sw + l2);
        let mut best: Option<Split> = None;
        let total = rows.len();
        for f in self.candidate_features(rng) {
            let n_bins = self.binned.edges[f].len() + 1;
            if n_bins < 2 {
                continue;
            }
            let col = &self.binned.bins[f];
            let mut hw = vec![0.0; n_bins];
            let mut hy = vec![0.0; n_bins];
            let mut hc = vec![0usize; n_bins];
            for &r in rows {
                let r = r as usize;
                let b = col[r] as usize;
                let w = self.weight[r];
                hw[b] += w;
                hy[b] += w * self.target[r];
                hc[b] += 1;
            }
            let (mut lw, mut ly, mut lc) = (0.0, 0.0, 0usize);
            for b in 0..n_bins - 1 {
                lw += hw[b];
                ly += hy[b];
                lc += hc[b];
                if hc[b] == 0 || lc < min_leaf {
                    continue;
                }
                let rc = total - lc;
                if rc < min_leaf {
                    break;
                }
                let (rw, ry) = (sw - lw, sy - ly);
                if !(lw > 0.0 && rw > 0.0) {
                    continue;
                }
                let gain = ly * ly / (lw + l2) + ry * ry / (rw + l2) - parent;
                if gain > 1e-12 * (1.0 + parent.abs()) && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        bin: b as u8,
                        gain,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;

    #[test]
    fn binning_respects_thresholds() {
        let x = array![[1.0], [2.0], [2.0], [5.0]];
        let b = BinnedFeatures::new(x.view(), 64);
        assert_eq!(b.edges[0], vec![1.5, 3.5]);
        assert_eq!(b.bins[0], vec![0, 1, 1, 2]);
        for (i, &v) in [1.0, 2.0, 2.0, 5.0].iter().enumerate() {
            let bin = b.bins[0][i] as usize;
            if bin < b.edges[0].len() {
                assert!(v <= b.edges[0][bin]);
            }
            if bin > 0 {
                assert!(v > b.edges[0][bin - 1]);
            }
        }
    }

    #[test]
    fn quantile_binning_caps_bin_count() {
        let x = ndarray::Array2::from_shape_fn((1000, 1), |(i, _)| i as f64);
        let b = BinnedFeatures::new(x.view(), 16);
        assert_eq!(b.edges[0].len(), 15);
        assert!(b.bins[0].iter().all(|&v| v < 16));
    }

    #[test]
    fn step_function_is_recovered() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let w = [1.0; 6];
        let binned = BinnedFeatures::new(x.view(), 64);
        let params = TreeParams {
            max_depth: 4,
            min_leaf: 1,
            mtry: 1,
            l2: 0.0,
        };
        let tree = Tree::grow(&binned, &y, &w, (0..6).collect(), &params, &mut seed::rng(0));
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.predict_row(array![2.4].view()), 0.0);
        assert_eq!(tree.predict_row(array![2.6].view()), 1.0);
    }

    #[test]
    fn depth_zero_is_weighted_mean() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = [1.0, 2.0, 6.0];
        let w = [1.0, 1.0, 2.0];
        let binned = BinnedFeatures::new(x.view(), 64);
        let params = TreeParams {
            max_depth: 0,
            min_leaf: 1,
            mtry: 1,
            l2: 0.0,
        };
        let tree = Tree::grow(&binned, &y, &w, vec![0, 1, 2], &params, &mut seed::rng(0));
        assert_eq!(tree.depth(), 0);
        assert_eq!(tree.predict_row(array![0.0].view()), 15.0 / 4.0);
    }
}
