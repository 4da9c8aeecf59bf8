//! Random forest of Gini CART trees.
//!
//! Trees grow best-first: the open leaf whose best split removes the most
//! weighted Gini impurity is expanded next, until no leaf can be split or
//! `max_leaf_nodes` is reached. A sample goes left when
//! `x[feature] <= threshold`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_leaf_nodes: Option<usize>,
    /// Fraction of columns examined at each split.
    pub max_features: f64,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 10,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_leaf_nodes: None,
            max_features: 1.0,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        let ok = self.n_estimators >= 1
            && self.min_samples_leaf >= 1
            && self.min_samples_split >= 2
            && self.max_leaf_nodes.is_none_or(|m| m >= 2)
            && self.max_features > 0.0
            && self.max_features <= 1.0
            && self.max_depth.is_none_or(|d| d >= 1);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid forest parameters {self:?}")))
        }
    }

    pub fn features_per_split(&self, n_cols: usize) -> usize {
        ((self.max_features * n_cols as f64).ceil() as usize).clamp(1, n_cols.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        class: u8,
        counts: [usize; 2],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

/// Gains closer than this count as equal; the first candidate wins.
const GAIN_TIE: f64 = 1e-9;

/// `n * gini` for class counts `(a, b)`.
pub(crate) fn weighted_gini(a: usize, b: usize) -> f64 {
    let n = (a + b) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (a as f64, b as f64);
    n - (a * a + b * b) / n
}

fn majority(counts: [usize; 2]) -> u8 {
    super::vote(counts[1], counts[0] + counts[1])
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Open {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    split: Split,
    order: usize,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // Max-heap: larger gain first, then earlier creation.
    fn cmp(&self, other: &Self) -> Ordering {
        self.split
            .gain
            .total_cmp(&other.split.gain)
            .then(other.order.cmp(&self.order))
    }
}

struct Builder<'a> {
    x: &'a Features,
    y: &'a [u8],
    p: &'a ForestParams,
    rng: Rng,
    n_features: usize,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> [usize; 2] {
        let ones = rows.iter().filter(|&&i| self.y[i] == 1).count();
        [rows.len() - ones, ones]
    }

    fn best_split(&mut self, rows: &[usize], depth: usize) -> Option<Split> {
        let counts = self.counts(rows);
        let n = rows.len();
        if n < self.p.min_samples_split
            || counts[0] == 0
            || counts[1] == 0
            || self.p.max_depth.is_some_and(|d| depth >= d)
            || n < 2 * self.p.min_samples_leaf
        {
            return None;
        }
        let d = self.x.n_cols();
        let mut features = sample(&mut self.rng, d, self.n_features).into_vec();
        features.sort_unstable();

        let parent = weighted_gini(counts[0], counts[1]);
        let min_leaf = self.p.min_samples_leaf;
        let mut best: Option<Split> = None;
        let mut column: Vec<(f64, u8)> = Vec::with_capacity(n);
        for f in features {
            column.clear();
            column.extend(rows.iter().map(|&i| (self.x.get(i, f), self.y[i])));
            column.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; 2];
            for pos in 0..n - 1 {
                left[column[pos].1 as usize] += 1;
                let n_left = pos + 1;
                if column[pos].0 == column[pos + 1].0 || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let gain = parent - weighted_gini(left[0], left[1]) - weighted_gini(right[0], right[1]);
                if best.is_none_or(|b| gain > b.gain + GAIN_TIE) {
                    let (lo, hi) = (column[pos].0, column[pos + 1].0);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>) -> Tree {
        let mut nodes = vec![TreeNode::Leaf {
            class: majority(self.counts(&rows)),
            counts: self.counts(&rows),
        }];
        let mut open = BinaryHeap::new();
        let mut order = 0;
        if let Some(split) = self.best_split(&rows, 0) {
            open.push(Open {
                node: 0,
                rows,
                depth: 0,
                split,
                order,
            });
        }
        let mut leaves = 1;
        let cap = self.p.max_leaf_nodes.unwrap_or(usize::MAX);
        while leaves < cap {
            let Some(item) = open.pop() else { break };
            let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = item
                .rows
                .iter()
                .partition(|&&i| self.x.get(i, item.split.feature) <= item.split.threshold);
            let mut children = [0; 2];
            for (c, child_rows) in [l_rows, r_rows].into_iter().enumerate() {
                let counts = self.counts(&child_rows);
                let id = nodes.len();
                nodes.push(TreeNode::Leaf {
                    class: majority(counts),
                    counts,
                });
                children[c] = id;
                if let Some(split) = self.best_split(&child_rows, item.depth + 1) {
                    order += 1;
                    open.push(Open {
                        node: id,
                        rows: child_rows,
                        depth: item.depth + 1,
                        split,
                        order,
                    });
                }
            }
            nodes[item.node] = TreeNode::Split {
                feature: item.split.feature,
                threshold: item.split.threshold,
                left: children[0],
                right: children[1],
            };
            leaves += 1;
        }
        Tree { nodes }
    }
}

/// Grows one tree on `rows` (duplicates allowed).
pub fn grow_tree(p: &ForestParams, x: &Features, y: &[u8], rows: Vec<usize>, seed: u64) -> Result<Tree> {
    p.validate()?;
    let mut b = Builder {
        x,
        y,
        p,
        rng: rng::seeded(seed),
        n_features: p.features_per_split(x.n_cols()),
    };
    Ok(b.grow(rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

pub(super) fn fit(p: &ForestParams, x: &Features, y: &[u8], seed: u64) -> Result<ForestModel> {
    p.validate()?;
    let n = y.len();
    let trees = (0..p.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[0x7265, t as u64]);
            let rows: Vec<usize> = if p.bootstrap {
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(p, x, y, rows, r.random())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel { trees })
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let positive = self.trees.iter().filter(|t| t.predict_row(row) == 1).count();
        super::vote(positive, self.trees.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(weighted_gini(5, 0), 0.0);
        assert!((weighted_gini(2, 2) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constraints_are_honoured() {
        let rows: Vec<[f64; 2]> = (0..200)
            .map(|i| [((i * 37) % 101) as f64, ((i * 53) % 89) as f64])
            .collect();
        let y: Vec<u8> = rows.iter().map(|r| u8::from((r[0] + r[1]) as usize % 3 == 0)).collect();
        let x = Features::from_rows(2, &rows).unwrap();
        let p = ForestParams {
            max_leaf_nodes: Some(7),
            max_depth: Some(4),
            min_samples_leaf: 5,
            bootstrap: false,
            ..ForestParams::default()
        };
        let t = grow_tree(&p, &x, &y, (0..200).collect(), 1).unwrap();
        assert!(t.leaf_count() <= 7);
        assert!(t.depth() <= 4);
        for n in &t.nodes {
            if let TreeNode::Leaf { counts, .. } = n {
                assert!(counts[0] + counts[1] >= 5);
            }
        }
    }

    #[test]
    fn feature_subset_size() {
        let p = ForestParams {
            max_features: 0.01,
            ..ForestParams::default()
        };
        assert_eq!(p.features_per_split(100), 1);
        assert_eq!(p.features_per_split(150), 2);
        assert_eq!(ForestParams::default().features_per_split(7), 7);
    }
}
