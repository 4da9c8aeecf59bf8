//! k-nearest-neighbour classifier over a KD-tree index.
//!
//! Neighbours are ordered by (squared Euclidean distance, training index),
//! so the neighbour set is unique and the index layout chosen by
//! `leaf_size` can never change a prediction.

use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::dataset::Features;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub leaf_size: usize,
    pub n_neighbors: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams {
            leaf_size: 30,
            n_neighbors: 5,
        }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        points: Vec<usize>,
    },
    Split {
        left: usize,
        right: usize,
    },
}

/// Exact k-nearest-neighbour index with axis-aligned bounding boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdTree {
    points: Features,
    nodes: Vec<Node>,
    /// Per node, `[min, max]` of every coordinate (`2 * n_cols` values).
    bounds: Vec<Vec<f64>>,
    leaf_size: usize,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    pub fn build(points: Features, leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let mut tree = KdTree {
            points,
            nodes: Vec::new(),
            bounds: Vec::new(),
            leaf_size,
        };
        let all: Vec<usize> = (0..tree.points.n_rows()).collect();
        tree.build_node(all);
        tree
    }

    fn bounding_box(&self, idx: &[usize]) -> Vec<f64> {
        let d = self.points.n_cols();
        let mut b = Vec::with_capacity(2 * d);
        for j in 0..d {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.points.get(i, j);
                (lo.min(v), hi.max(v))
            });
            b.push(lo);
            b.push(hi);
        }
        b
    }

    fn build_node(&mut self, mut idx: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let bbox = self.bounding_box(&idx);
        self.nodes.push(Node::Leaf { points: Vec::new() });
        self.bounds.push(bbox.clone());

        let spread_dim = (0..self.points.n_cols())
            .map(|j| (j, bbox[2 * j + 1] - bbox[2 * j]))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let splittable = idx.len() > self.leaf_size && spread_dim.is_some_and(|(_, s)| s > 0.0);
        if !splittable {
            self.nodes[id] = Node::Leaf { points: idx };
            return id;
        }
        let (dim, _) = spread_dim.expect("checked above");
        idx.sort_by(|&a, &b| {
            self.points
                .get(a, dim)
                .total_cmp(&self.points.get(b, dim))
                .then(a.cmp(&b))
        });
        let right_idx = idx.split_off(idx.len() / 2);
        let left = self.build_node(idx);
        let right = self.build_node(right_idx);
        self.nodes[id] = Node::Split { left, right };
        id
    }

    /// Squared distance from `q` to the box of `node`; never exceeds the
    /// computed distance to any point inside it.
    fn lower_bound(&self, node: usize, q: &[f64]) -> f64 {
        let b = &self.bounds[node];
        let mut s = 0.0;
        for (j, &x) in q.iter().enumerate() {
            let (lo, hi) = (b[2 * j], b[2 * j + 1]);
            let d = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            };
            s += d * d;
        }
        s
    }

    /// The `k` nearest training indices to `q`, closest first.
    pub fn query(&self, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let k = k.min(self.points.n_rows());
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, k, &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|c| (c.0, c.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn search(&self, node: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        if heap.len() == k && self.lower_bound(node, q) > heap.peek().expect("non-empty").0 {
            return;
        }
        match &self.nodes[node] {
            Node::Leaf { points } => {
                for &i in points {
                    let c = Candidate(squared_distance(q, self.points.row(i)), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { left, right } => {
                let (l, r) = (self.lower_bound(*left, q), self.lower_bound(*right, q));
                let (first, second) = if l <= r { (*left, *right) } else { (*right, *left) };
                self.search(first, q, k, heap);
                self.search(second, q, k, heap);
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    tree: KdTree,
    labels: Vec<u8>,
    k: usize,
}

pub(super) fn fit(p: &KnnParams, x: &Features, y: &[u8]) -> Result<KnnModel> {
    if p.n_neighbors == 0 {
        return Err(Error::InvalidConfig("n_neighbors must be at least 1".into()));
    }
    Ok(KnnModel {
        tree: KdTree::build(x.clone(), p.leaf_size),
        labels: y.to_vec(),
        k: p.n_neighbors,
    })
}

impl KnnModel {
    pub fn neighbors(&self, row: &[f64]) -> Vec<(f64, usize)> {
        self.tree.query(row, self.k)
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let found = self.neighbors(row);
        let positive = found.iter().filter(|&&(_, i)| self.labels[i] == 1).count();
        super::vote(positive, found.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_size_controls_layout() {
        let rows: Vec<[f64; 2]> = (0..64).map(|i| [i as f64, (i * 7 % 13) as f64]).collect();
        let f = Features::from_rows(2, &rows).unwrap();
        assert_eq!(KdTree::build(f.clone(), 100).leaf_count(), 1);
        assert!(KdTree::build(f, 4).leaf_count() >= 16);
    }

    #[test]
    fn query_returns_sorted_neighbours() {
        let f = Features::from_rows(1, &[[0.0], [3.0], [1.0], [1.0], [10.0]]).unwrap();
        let t = KdTree::build(f, 1);
        let got: Vec<usize> = t.query(&[1.0], 3).into_iter().map(|(_, i)| i).collect();
        assert_eq!(got, vec![2, 3, 0]);
        assert_eq!(t.query(&[0.0], 10).len(), 5);
    }
}
