use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{Response, Scratch};
use super::TreeParams;
use crate::data::FeatureMatrix;

/// One node of a fitted tree. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf_id: usize,
        value: f64,
    },
}

/// A fitted decision tree. Node 0 is the root; leaf ids are dense `0..n_leaves`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    n_leaves: usize,
    depth: usize,
    /// Training rows drawn for this tree, with multiplicity.
    bootstrap_indices: Vec<u32>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// Length of the longest root-to-leaf path (a single leaf has depth 0).
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn bootstrap_indices(&self) -> &[u32] {
        &self.bootstrap_indices
    }

    /// Index into `nodes` of the leaf reached by `row`.
    #[inline]
    fn route<F: Fn(usize) -> f64>(&self, feature_value: F) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if feature_value(feature) <= threshold { left } else { right },
                Node::Leaf { .. } => return at,
            }
        }
    }

    /// Leaf id and leaf value reached by row `i` of `x`.
    #[inline]
    pub fn leaf(&self, x: &FeatureMatrix, i: usize) -> (usize, f64) {
        match self.nodes[self.route(|j| x.get(i, j))] {
            Node::Leaf { leaf_id, value } => (leaf_id, value),
            Node::Split { .. } => unreachable!("route always ends at a leaf"),
        }
    }

    pub fn predict_row(&self, x: &FeatureMatrix, i: usize) -> f64 {
        self.leaf(x, i).1
    }

    pub fn leaf_id(&self, x: &FeatureMatrix, i: usize) -> usize {
        self.leaf(x, i).0
    }

    /// Checks structural invariants; used by deserialization and tests.
    pub(crate) fn validate(&self, n_features: usize) -> Result<(), String> {
        let mut seen = vec![false; self.n_leaves];
        for (k, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Split {
                    feature,
                    left,
                    right,
                    threshold,
                } => {
                    if feature >= n_features || !threshold.is_finite() {
                        return Err(format!("node {k}: bad split"));
                    }
                    if left <= k || right <= k || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(format!("node {k}: child index out of order"));
                    }
                }
                Node::Leaf { leaf_id, .. } => {
                    if leaf_id >= self.n_leaves || seen[leaf_id] {
                        return Err(format!("node {k}: leaf id {leaf_id} not dense"));
                    }
                    seen[leaf_id] = true;
                }
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err("leaf ids not dense".into())
        }
    }

    /// Assembles a tree from explicit nodes (root first), checking that
    /// children follow their parents and that leaf ids are dense.
    pub fn from_nodes(nodes: Vec<Node>, n_features: usize, bootstrap_indices: Vec<u32>) -> crate::error::Result<Self> {
        if nodes.is_empty() {
            return Err(crate::error::Error::EmptyData("tree has no nodes".into()));
        }
        let n_leaves = nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count();
        let mut tree = Tree {
            nodes,
            n_leaves,
            depth: 0,
            bootstrap_indices,
        };
        tree.validate(n_features).map_err(crate::error::Error::InvalidParameter)?;
        tree.depth = tree.compute_depth(0);
        Ok(tree)
    }

    fn compute_depth(&self, at: usize) -> usize {
        match self.nodes[at] {
            Node::Split { left, right, .. } => 1 + self.compute_depth(left).max(self.compute_depth(right)),
            Node::Leaf { .. } => 0,
        }
    }

    #[cfg(test)]
    pub(crate) fn from_parts(nodes: Vec<Node>) -> Self {
        let p = nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(feature + 1),
                Node::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0);
        Self::from_nodes(nodes, p, Vec::new()).expect("valid test tree")
    }
}

struct Builder<'a, R: Rng> {
    data: &'a FeatureMatrix,
    response: &'a Response<'a>,
    params: &'a TreeParams,
    rng: &'a mut R,
    scratch: Scratch,
    nodes: Vec<Node>,
    n_leaves: usize,
    depth: usize,
    buffer: Vec<u32>,
}

impl<R: Rng> Builder<'_, R> {
    fn make_leaf(&mut self, slot: usize, rows: &[u32]) {
        self.nodes[slot] = Node::Leaf {
            leaf_id: self.n_leaves,
            value: self.response.leaf_value(rows),
        };
        self.n_leaves += 1;
    }

    /// Grows the subtree for `rows` into `nodes[slot]`.
    fn grow(&mut self, slot: usize, rows: &mut [u32], depth: usize) {
        self.depth = self.depth.max(depth);
        let min_leaf = self.params.min_leaf_count();
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if depth_capped || rows.len() < 2 * min_leaf || self.response.is_pure(rows) {
            self.make_leaf(slot, rows);
            return;
        }

        let p = self.data.ncols();
        let mut features = sample(self.rng, p, self.params.mtry).into_vec();
        features.sort_unstable();
        let Some(best) = self
            .response
            .best_split(self.data, rows, &features, min_leaf, &mut self.scratch)
        else {
            self.make_leaf(slot, rows);
            return;
        };

        // Stable partition: rows going left keep their order, then the rest.
        self.buffer.clear();
        let mut n_left = 0;
        for k in 0..rows.len() {
            let r = rows[k];
            if self.data.get(r as usize, best.feature) <= best.threshold {
                rows[n_left] = r;
                n_left += 1;
            } else {
                self.buffer.push(r);
            }
        }
        rows[n_left..].copy_from_slice(&self.buffer);

        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf_id: 0, value: 0.0 });
        let right = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf_id: 0, value: 0.0 });
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        let (left_rows, right_rows) = rows.split_at_mut(n_left);
        self.grow(left, left_rows, depth + 1);
        self.grow(right, right_rows, depth + 1);
    }
}

/// Draws the rows a tree is grown on.
pub(crate) fn draw_rows<R: Rng>(n: usize, params: &TreeParams, rng: &mut R) -> Vec<u32> {
    if !params.bootstrap {
        return (0..n as u32).collect();
    }
    let size = ((params.bootstrap_fraction * n as f64).round() as usize).max(1);
    (0..size).map(|_| rng.random_range(0..n as u32)).collect()
}

/// Grows one tree on `rows` (indices into `data`, duplicates allowed).
pub(crate) fn grow_tree<R: Rng>(
    data: &FeatureMatrix,
    response: &Response<'_>,
    params: &TreeParams,
    rows: Vec<u32>,
    rng: &mut R,
) -> Tree {
    let mut work = rows.clone();
    let mut builder = Builder {
        data,
        response,
        params,
        rng,
        scratch: Scratch::default(),
        nodes: vec![Node::Leaf { leaf_id: 0, value: 0.0 }],
        n_leaves: 0,
        depth: 0,
        buffer: Vec::new(),
    };
    builder.grow(0, &mut work, 0);
    Tree {
        nodes: builder.nodes,
        n_leaves: builder.n_leaves,
        depth: builder.depth,
        bootstrap_indices: rows,
    }
}
