//! Random forests for continuous, binary and survival targets.
//!
//! A forest is used two ways: as a predictor (the mean of its trees' leaf
//! values) and as a kernel generator (through [`Forest::terminal_leaf_ids`]).
//! Tree `m` draws all of its randomness from a generator seeded with
//! `seed + m`, so fitting is reproducible regardless of how the trees are
//! scheduled across threads.

mod split;
mod tree;

use std::io::{Read, Write};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, Target, TargetKind};
use crate::error::{Error, Result};
use split::Response;
pub use tree::{Node, Tree};

/// Default number of trees.
pub const DEFAULT_TREES: usize = 500;

/// Minimum terminal-node occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLimit {
    /// Minimum number of (bootstrap) rows per leaf.
    Size(usize),
    /// Minimum total case weight per leaf; bootstrap duplicates count once each.
    Weight(f64),
}

/// Tree-growing parameters shared by every tree of a forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Candidate features sampled (without replacement) at each node.
    pub mtry: usize,
    pub min_node: NodeLimit,
    pub max_depth: Option<usize>,
    /// Bootstrap sample size as a fraction of the training rows.
    pub bootstrap_fraction: f64,
    /// Draw a bootstrap sample (with replacement). When false every tree
    /// sees each training row exactly once.
    pub bootstrap: bool,
}

impl TreeParams {
    /// Library defaults: `mtry = floor(sqrt(p))` for every target kind, with
    /// leaves of at least 5 rows for regression, 1 row for classification
    /// and total weight 7 for survival.
    pub fn default_for(kind: TargetKind, p: usize) -> Self {
        let (mtry, min_node) = match kind {
            TargetKind::Continuous => ((p as f64).sqrt().floor() as usize, NodeLimit::Size(5)),
            TargetKind::Binary | TargetKind::Class => ((p as f64).sqrt().floor() as usize, NodeLimit::Size(1)),
            TargetKind::Survival => ((p as f64).sqrt().floor() as usize, NodeLimit::Weight(7.0)),
        };
        Self {
            mtry: mtry.clamp(1, p.max(1)),
            min_node,
            max_depth: None,
            bootstrap_fraction: 1.0,
            bootstrap: true,
        }
    }

    /// Scales the minimum node size (or weight) by `factor`.
    pub fn with_node_size_multiplier(mut self, factor: usize) -> Self {
        self.min_node = match self.min_node {
            NodeLimit::Size(s) => NodeLimit::Size(s * factor),
            NodeLimit::Weight(w) => NodeLimit::Weight(w * factor as f64),
        };
        self
    }

    pub(crate) fn min_leaf_count(&self) -> usize {
        match self.min_node {
            NodeLimit::Size(s) => s.max(1),
            NodeLimit::Weight(w) => (w.ceil() as usize).max(1),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.mtry == 0 || self.mtry > p {
            return Err(Error::InvalidParameter(format!("mtry must be in 1..={p}, got {}", self.mtry)));
        }
        match self.min_node {
            NodeLimit::Size(0) => return Err(Error::InvalidParameter("min_node_size must be >= 1".into())),
            NodeLimit::Weight(w) if !(w > 0.0) => {
                return Err(Error::InvalidParameter("min_node_weight must be > 0".into()))
            }
            _ => {}
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParameter("max_depth must be >= 1".into()));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(Error::InvalidParameter("bootstrap_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

fn response<'a>(data: &FeatureMatrix, targets: &'a Target, params: &TreeParams) -> Result<Response<'a>> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::EmptyData("feature matrix has no rows or columns".into()));
    }
    if targets.len() != data.nrows() {
        return Err(Error::DimensionMismatch {
            expected: data.nrows(),
            got: targets.len(),
        });
    }
    params.validate(data.ncols())?;
    Ok(match targets {
        Target::Continuous(y) => {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("continuous target".into()));
            }
            Response::Continuous(y)
        }
        Target::Binary(y) => {
            let labels = y
                .iter()
                .map(|&l| match l {
                    -1 => Ok(0),
                    1 => Ok(1),
                    other => Err(Error::InvalidLabel(f64::from(other))),
                })
                .collect::<Result<Vec<u32>>>()?;
            Response::Classes { labels, n_classes: 2 }
        }
        Target::Class(y) => {
            let n_classes = y.iter().copied().max().map_or(1, |m| m as usize + 1);
            Response::Classes {
                labels: y.clone(),
                n_classes,
            }
        }
        Target::Survival(s) => {
            if s.n_events() == 0 {
                return Err(Error::AllCensored {
                    column: "event".into(),
                });
            }
            Response::Survival {
                time: &s.time,
                event: &s.event,
            }
        }
    })
}

/// Grows a single tree on a bootstrap sample of `data`.
pub fn fit_tree<R: rand::Rng>(data: &FeatureMatrix, targets: &Target, params: &TreeParams, rng: &mut R) -> Result<Tree> {
    let resp = response(data, targets, params)?;
    let rows = tree::draw_rows(data.nrows(), params, rng);
    Ok(tree::grow_tree(data, &resp, params, rows, rng))
}

/// An ensemble of trees plus the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    params: TreeParams,
    target_kind: TargetKind,
    n_features: usize,
    seed: u64,
}

/// Seed of tree `m` in a forest seeded with `seed`.
pub fn tree_seed(seed: u64, m: usize) -> u64 {
    seed.wrapping_add(m as u64)
}

impl Forest {
    /// Fits `n_trees` trees; tree `m` uses a generator seeded with `seed + m`.
    pub fn fit(data: &FeatureMatrix, targets: &Target, params: &TreeParams, n_trees: usize, seed: u64) -> Result<Self> {
        if n_trees == 0 {
            return Err(Error::InvalidParameter("forest needs at least one tree".into()));
        }
        let resp = response(data, targets, params)?;
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, m));
                let rows = tree::draw_rows(data.nrows(), params, &mut rng);
                tree::grow_tree(data, &resp, params, rows, &mut rng)
            })
            .collect();
        Ok(Self {
            trees,
            params: params.clone(),
            target_kind: targets.kind(),
            n_features: data.ncols(),
            seed,
        })
    }

    /// Assembles a forest from already-grown trees.
    pub fn from_trees(trees: Vec<Tree>, params: TreeParams, target_kind: TargetKind, n_features: usize, seed: u64) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParameter("forest needs at least one tree".into()));
        }
        for (m, t) in trees.iter().enumerate() {
            t.validate(n_features)
                .map_err(|e| Error::InvalidParameter(format!("tree {m}: {e}")))?;
        }
        Ok(Self {
            trees,
            params,
            target_kind,
            n_features,
            seed,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn target_kind(&self) -> TargetKind {
        self.target_kind
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_columns(&self, x: &FeatureMatrix) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Mean over trees of the leaf value reached by each row: the response
    /// mean for regression, the positive-class vote fraction for binary
    /// targets, and the leaf event rate (a risk score) for survival.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        let m = self.trees.len() as f64;
        Ok((0..x.nrows())
            .into_par_iter()
            .map(|i| self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>() / m)
            .collect())
    }

    /// Class labels for a binary forest: +1 when the vote fraction is at least 0.5.
    pub fn predict_labels(&self, x: &FeatureMatrix) -> Result<Vec<i8>> {
        Ok(self
            .predict(x)?
            .into_iter()
            .map(|v| if v >= 0.5 { 1 } else { -1 })
            .collect())
    }

    /// `rows x M` matrix whose entry `(i, m)` is the leaf id row `i` reaches in tree `m`.
    pub fn terminal_leaf_ids(&self, x: &FeatureMatrix) -> Result<Array2<u32>> {
        self.check_columns(x)?;
        let n = x.nrows();
        let columns: Vec<Vec<u32>> = self
            .trees
            .par_iter()
            .map(|t| (0..n).map(|i| t.leaf_id(x, i) as u32).collect())
            .collect();
        let mut ids = Array2::zeros((n, self.trees.len()));
        for (m, col) in columns.iter().enumerate() {
            for (i, &id) in col.iter().enumerate() {
                ids[[i, m]] = id;
            }
        }
        Ok(ids)
    }

    /// Out-of-bag predictions for the training rows `x` (the rows the forest
    /// was fitted on). `None` for rows that were in every bootstrap sample.
    pub fn oob_predict(&self, x: &FeatureMatrix) -> Result<Vec<Option<f64>>> {
        self.check_columns(x)?;
        let n = x.nrows();
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        let mut in_bag = vec![false; n];
        for t in &self.trees {
            in_bag.iter_mut().for_each(|b| *b = false);
            for &r in t.bootstrap_indices() {
                if let Some(b) = in_bag.get_mut(r as usize) {
                    *b = true;
                }
            }
            for i in (0..n).filter(|&i| !in_bag[i]) {
                sums[i] += t.predict_row(x, i);
                counts[i] += 1;
            }
        }
        Ok(sums
            .into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect())
    }

    /// Writes the versioned JSON document.
    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let doc = ForestDocument {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            forest: self.clone(),
        };
        serde_json::to_writer(writer, &doc)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let doc: ForestDocument = serde_json::from_reader(reader)?;
        if doc.format != FOREST_FORMAT || doc.version != FOREST_VERSION {
            return Err(Error::Schema(format!(
                "unsupported forest document {} v{}",
                doc.format, doc.version
            )));
        }
        let f = doc.forest;
        Self::from_trees(f.trees, f.params, f.target_kind, f.n_features, f.seed)
    }
}

const FOREST_FORMAT: &str = "rfkernel-forest";
const FOREST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestDocument {
    format: String,
    version: u32,
    forest: Forest,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SurvivalData;

    fn separable() -> (FeatureMatrix, Target) {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 8.0 + 0.0625, ((i * 5) % 8) as f64]).collect();
        let y = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        (FeatureMatrix::from_rows(&rows).unwrap(), Target::Continuous(y))
    }

    fn full_sample(p: usize) -> TreeParams {
        TreeParams {
            mtry: p,
            min_node: NodeLimit::Size(1),
            max_depth: None,
            bootstrap_fraction: 1.0,
            bootstrap: false,
        }
    }

    #[test]
    fn separable_data_gives_single_split() {
        let (x, y) = separable();
        let tree = fit_tree(&x, &y, &full_sample(2), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        match tree.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            _ => panic!("root should split"),
        }
        for i in 0..8 {
            assert_eq!(tree.predict_row(&x, i), if i < 4 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn constant_target_gives_single_leaf() {
        let (x, _) = separable();
        let y = Target::Continuous(vec![3.0; 8]);
        let params = TreeParams::default_for(TargetKind::Continuous, 2);
        let tree = fit_tree(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(tree.n_leaves(), 1);
        assert_eq!(tree.predict_row(&x, 0), 3.0);
    }

    #[test]
    fn error_paths() {
        let (x, _) = separable();
        let params = full_sample(2);
        let empty = FeatureMatrix::from_rows(&[]).unwrap();
        assert!(matches!(
            fit_tree(&empty, &Target::Continuous(vec![]), &params, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::EmptyData(_))
        ));
        let censored = Target::Survival(SurvivalData::new(vec![1.0; 8], vec![false; 8]).unwrap());
        assert!(matches!(
            fit_tree(&x, &censored, &params, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::AllCensored { .. })
        ));
        assert!(matches!(
            fit_tree(&x, &Target::Continuous(vec![1.0; 3]), &params, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = TreeParams { mtry: 3, ..params };
        assert!(fit_tree(&x, &Target::Continuous(vec![1.0; 8]), &bad, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn leaves_respect_min_node_size() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let y = Target::Continuous((0..100).map(|i| (i % 7) as f64).collect());
        let mut params = TreeParams::default_for(TargetKind::Continuous, 2);
        params.min_node = NodeLimit::Size(6);
        let tree = fit_tree(&x, &y, &params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut counts = vec![0; tree.n_leaves()];
        for &r in tree.bootstrap_indices() {
            counts[tree.leaf_id(&x, r as usize)] += 1;
        }
        assert!(counts.iter().all(|&c| c >= 6), "{counts:?}");
    }

    #[test]
    fn forest_json_round_trip() {
        let (x, y) = separable();
        let forest = Forest::fit(&x, &y, &full_sample(2), 3, 11).unwrap();
        let mut buf = Vec::new();
        forest.write_json(&mut buf).unwrap();
        let back = Forest::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, forest);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"format\":\"rfkernel-forest\""));
    }

    #[test]
    fn single_leaf_forest_ids_are_zero() {
        let (x, _) = separable();
        let forest = Forest::fit(&x, &Target::Continuous(vec![2.0; 8]), &full_sample(2), 4, 0).unwrap();
        let ids = forest.terminal_leaf_ids(&x).unwrap();
        assert!(ids.iter().all(|&id| id == 0));
        assert_eq!(forest.predict(&x).unwrap(), vec![2.0; 8]);
    }

    #[test]
    fn averaging_two_trees() {
        let leaf = |v| Tree::from_parts(vec![Node::Leaf { leaf_id: 0, value: v }]);
        let forest = Forest::from_trees(
            vec![leaf(1.0), leaf(3.0)],
            full_sample(1),
            TargetKind::Continuous,
            1,
            0,
        )
        .unwrap();
        let x = FeatureMatrix::from_rows(&[vec![0.4]]).unwrap();
        assert_eq!(forest.predict(&x).unwrap(), vec![2.0]);
        let wide = FeatureMatrix::from_rows(&[vec![0.4, 0.1]]).unwrap();
        assert!(matches!(forest.predict(&wide), Err(Error::DimensionMismatch { .. })));
    }
}
