//! Isolation forest over fixed-width numeric rows.
//!
//! Each tree recursively partitions a random subsample: at every node a
//! splittable feature (one whose values span a nonzero range) is chosen
//! uniformly, a split value is drawn uniformly inside that range, and rows
//! fall left or right of it. Points that isolate in few splits are anomalous:
//! the score `2^(-E[h]/c(psi))` maps short mean path lengths toward 1.
//!
//! Trees can carry an optional group key per row. The grouped builder in
//! `si` adds one extra stopping rule on top of this machinery; everything
//! else (sampling, splitting, normalization) is shared so the two forest
//! flavors differ only where the algorithms differ.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, DOMAIN_TREE};

/// Trees per forest.
pub const DEFAULT_TREES: usize = 100;

/// Training rows per tree, capped at the dataset size.
pub const DEFAULT_SUBSAMPLE: usize = 256;

/// Euler-Mascheroni constant, for the path-length normalizer.
pub const EULER_GAMMA: f64 = 0.5772156649;

const FOREST_FORMAT: &str = "siforest-forest";
const FOREST_VERSION: u32 = 1;

/// Expected path length of an unsuccessful binary-search-tree lookup over
/// `n` points: the normalizer for isolation depths.
pub fn expected_path_c(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let nf = n as f64;
            2.0 * ((nf - 1.0).ln() + EULER_GAMMA) - 2.0 * (nf - 1.0) / nf
        }
    }
}

/// Construction parameters for a forest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Rows drawn per tree; the effective size is `min(this, n_rows)`.
    pub subsample_size: usize,
    /// Depth cap; `None` means ceil(log2(effective subsample size)).
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Build trees concurrently. Output is identical either way.
    pub parallel: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: DEFAULT_TREES,
            subsample_size: DEFAULT_SUBSAMPLE,
            max_depth: None,
            seed: 0,
            parallel: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config(format!(
                "n_trees must be >= 1, got {}",
                self.n_trees
            )));
        }
        if self.subsample_size < 2 {
            return Err(Error::Config(format!(
                "subsample_size must be >= 2, got {}",
                self.subsample_size
            )));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("max_depth must be >= 1".to_string()));
        }
        Ok(())
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One tree node. External nodes remember how many training rows reached
/// them; group-pure externals additionally carry the shared group key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal {
        feature: usize,
        split: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    External {
        size: usize,
        #[serde(default, skip_serializing_if = "is_false")]
        group_pure: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group: Option<String>,
    },
}

impl Node {
    pub fn is_external(&self) -> bool {
        matches!(self, Node::External { .. })
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        match self {
            Node::External { .. } => 0,
            Node::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// How a group-pure leaf contributes to path length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PureLeafAdjust {
    /// Add `expected_path_c(leaf size)`, as for any unexpanded leaf.
    #[default]
    CSize,
    /// Add nothing: the leaf counts only its raw depth.
    RawDepth,
}

/// A fitted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Node>,
    n_features: usize,
    /// Effective per-tree subsample size psi, the score normalizer's n.
    subsample_size: usize,
    config: ForestConfig,
}

impl Forest {
    pub fn trees(&self) -> &[Node] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }
}

fn ceil_log2(n: usize) -> usize {
    debug_assert!(n >= 2);
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

fn check_table(rows: &[Vec<f64>]) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 rows to fit a forest, got {}",
            rows.len()
        )));
    }
    if rows.len() > u32::MAX as usize {
        return Err(Error::Data(format!("too many rows: {}", rows.len())));
    }
    let n_features = rows[0].len();
    if n_features == 0 {
        return Err(Error::Schema("rows must have at least one feature".to_string()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::Schema(format!(
                "row {i} has {} features, expected {n_features}",
                row.len()
            )));
        }
    }
    Ok(n_features)
}

/// Draws `budget` distinct row indices uniformly without replacement.
pub(crate) fn draw_subsample(rng: &mut ChaCha8Rng, n_rows: usize, budget: usize) -> Vec<u32> {
    debug_assert!(budget <= n_rows);
    let mut pool: Vec<u32> = (0..n_rows as u32).collect();
    for i in 0..budget {
        let j = rng.random_range(i..n_rows);
        pool.swap(i, j);
    }
    pool.truncate(budget);
    pool
}

/// Group annotations for the grouped builder: a group id per table row and
/// the id-to-key mapping.
#[derive(Clone, Copy)]
pub(crate) struct GroupRefs<'a> {
    pub group_of: &'a [u32],
    pub names: &'a [String],
}

impl GroupRefs<'_> {
    /// The shared group id if every listed row has the same one.
    fn uniform_group(&self, indices: &[u32]) -> Option<u32> {
        let first = self.group_of[indices[0] as usize];
        indices[1..]
            .iter()
            .all(|&i| self.group_of[i as usize] == first)
            .then_some(first)
    }

    fn name(&self, group: u32) -> &str {
        &self.names[group as usize]
    }
}

struct BuildCtx<'a> {
    rows: &'a [Vec<f64>],
    n_features: usize,
    groups: Option<GroupRefs<'a>>,
    max_depth: usize,
}

fn leaf(ctx: &BuildCtx, indices: &[u32], pure: bool) -> Node {
    let group = if pure {
        ctx.groups.map(|g| {
            g.name(g.group_of[indices[0] as usize]).to_string()
        })
    } else {
        None
    };
    Node::External {
        size: indices.len(),
        group_pure: group.is_some(),
        group,
    }
}

fn build_node(ctx: &BuildCtx, indices: Vec<u32>, depth: usize, rng: &mut ChaCha8Rng) -> Node {
    debug_assert!(!indices.is_empty());
    if indices.len() == 1 {
        return leaf(ctx, &indices, true);
    }
    if let Some(groups) = &ctx.groups {
        if groups.uniform_group(&indices).is_some() {
            return leaf(ctx, &indices, true);
        }
    }
    if depth >= ctx.max_depth {
        return leaf(ctx, &indices, false);
    }
    // A feature is splittable only if its values span a nonzero range.
    let mut splittable: Vec<(usize, f64, f64)> = Vec::with_capacity(ctx.n_features);
    for f in 0..ctx.n_features {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &indices {
            let v = ctx.rows[i as usize][f];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            splittable.push((f, lo, hi));
        }
    }
    if splittable.is_empty() {
        return leaf(ctx, &indices, false);
    }
    let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
    let mut split = rng.random_range(lo..hi);
    // Keep the split strictly inside (lo, hi) so both children are nonempty.
    if split <= lo {
        split = lo + (hi - lo) / 2.0;
    }
    debug_assert!(lo < split && split < hi);
    let (left, right): (Vec<u32>, Vec<u32>) = indices
        .into_iter()
        .partition(|&i| ctx.rows[i as usize][feature] < split);
    Node::Internal {
        feature,
        split,
        left: Box::new(build_node(ctx, left, depth + 1, rng)),
        right: Box::new(build_node(ctx, right, depth + 1, rng)),
    }
}

/// Shared fitting loop: validates the table, derives one RNG stream per tree,
/// draws that tree's subsample with `sample`, and builds it. Parallel and
/// sequential construction produce identical forests because every tree's
/// randomness is self-contained.
pub(crate) fn fit_with_sampler(
    rows: &[Vec<f64>],
    cfg: ForestConfig,
    groups: Option<GroupRefs<'_>>,
    sample: impl Fn(&mut ChaCha8Rng, usize) -> Vec<u32> + Sync,
) -> Result<Forest> {
    cfg.validate()?;
    let n_features = check_table(rows)?;
    let effective = cfg.subsample_size.min(rows.len());
    let max_depth = cfg.max_depth.unwrap_or_else(|| ceil_log2(effective));
    let ctx = BuildCtx {
        rows,
        n_features,
        groups,
        max_depth,
    };
    let build_one = |t: usize| {
        let mut rng = stream(cfg.seed, DOMAIN_TREE, t as u64);
        let indices = sample(&mut rng, effective);
        debug_assert_eq!(indices.len(), effective);
        build_node(&ctx, indices, 0, &mut rng)
    };
    let trees: Vec<Node> = if cfg.parallel {
        (0..cfg.n_trees).into_par_iter().map(build_one).collect()
    } else {
        (0..cfg.n_trees).map(build_one).collect()
    };
    Ok(Forest {
        trees,
        n_features,
        subsample_size: effective,
        config: cfg,
    })
}

/// Fits a baseline isolation forest: uniform row subsampling, no grouping.
pub fn fit_forest(rows: &[Vec<f64>], cfg: ForestConfig) -> Result<Forest> {
    let n_rows = rows.len();
    fit_with_sampler(rows, cfg, None, move |rng, budget| {
        draw_subsample(rng, n_rows, budget)
    })
}

fn leaf_adjustment(size: usize, group_pure: bool, adjust: PureLeafAdjust) -> f64 {
    if group_pure && adjust == PureLeafAdjust::RawDepth {
        0.0
    } else {
        expected_path_c(size)
    }
}

pub(crate) fn walk_unchecked(tree: &Node, row: &[f64], adjust: PureLeafAdjust) -> f64 {
    let mut node = tree;
    let mut depth = 0.0;
    loop {
        match node {
            Node::External {
                size, group_pure, ..
            } => return depth + leaf_adjustment(*size, *group_pure, adjust),
            Node::Internal {
                feature,
                split,
                left,
                right,
            } => {
                node = if row[*feature] < *split { left } else { right };
                depth += 1.0;
            }
        }
    }
}

fn max_feature(tree: &Node) -> Option<usize> {
    match tree {
        Node::External { .. } => None,
        Node::Internal {
            feature,
            left,
            right,
            ..
        } => [max_feature(left), max_feature(right), Some(*feature)]
            .into_iter()
            .flatten()
            .max(),
    }
}

/// Edges from the root to the leaf `row` reaches, plus the leaf's size
/// adjustment `expected_path_c(size)`.
pub fn path_length(tree: &Node, row: &[f64]) -> Result<f64> {
    if let Some(f) = max_feature(tree) {
        if f >= row.len() {
            return Err(Error::Schema(format!(
                "row has {} features but the tree splits on feature {f}",
                row.len()
            )));
        }
    }
    Ok(walk_unchecked(tree, row, PureLeafAdjust::CSize))
}

fn check_row_width(forest: &Forest, width: usize) -> Result<()> {
    if width != forest.n_features {
        return Err(Error::Schema(format!(
            "row has {width} features, forest expects {}",
            forest.n_features
        )));
    }
    Ok(())
}

pub(crate) fn mean_path_length(forest: &Forest, row: &[f64], adjust: PureLeafAdjust) -> f64 {
    let total: f64 = forest
        .trees
        .iter()
        .map(|t| walk_unchecked(t, row, adjust))
        .sum();
    total / forest.trees.len() as f64
}

pub(crate) fn score_from_mean_path(forest: &Forest, mean_path: f64) -> f64 {
    2f64.powf(-mean_path / expected_path_c(forest.subsample_size))
}

/// Anomaly score of one row: `2^(-E[h]/c(psi))`, higher is more anomalous.
pub fn anomaly_score(forest: &Forest, row: &[f64]) -> Result<f64> {
    check_row_width(forest, row.len())?;
    Ok(score_from_mean_path(
        forest,
        mean_path_length(forest, row, PureLeafAdjust::CSize),
    ))
}

pub(crate) fn score_rows(
    forest: &Forest,
    rows: &[Vec<f64>],
    adjust: PureLeafAdjust,
) -> Result<Vec<f64>> {
    for (i, row) in rows.iter().enumerate() {
        check_row_width(forest, row.len()).map_err(|_| {
            Error::Schema(format!(
                "row {i} has {} features, forest expects {}",
                row.len(),
                forest.n_features
            ))
        })?;
    }
    Ok(rows
        .par_iter()
        .map(|row| score_from_mean_path(forest, mean_path_length(forest, row, adjust)))
        .collect())
}

/// Scores every row, in input order.
pub fn score_table(forest: &Forest, rows: &[Vec<f64>]) -> Result<Vec<(usize, f64)>> {
    let scores = score_rows(forest, rows, PureLeafAdjust::CSize)?;
    Ok(scores.into_iter().enumerate().collect())
}

#[derive(Serialize, Deserialize)]
struct ForestDocument {
    format: String,
    version: u32,
    config: ForestConfig,
    n_features: usize,
    subsample_size: usize,
    trees: Vec<Node>,
}

/// Writes a forest as a versioned JSON document.
pub fn save_forest<W: Write>(writer: W, forest: &Forest) -> Result<()> {
    let doc = ForestDocument {
        format: FOREST_FORMAT.to_string(),
        version: FOREST_VERSION,
        config: forest.config,
        n_features: forest.n_features,
        subsample_size: forest.subsample_size,
        trees: forest.trees.clone(),
    };
    serde_json::to_writer(writer, &doc).map_err(|e| Error::Serialize(e.to_string()))
}

/// Reads a forest written by [`save_forest`].
pub fn load_forest<R: Read>(reader: R) -> Result<Forest> {
    let doc: ForestDocument =
        serde_json::from_reader(reader).map_err(|e| Error::Schema(e.to_string()))?;
    if doc.format != FOREST_FORMAT {
        return Err(Error::Schema(format!(
            "unknown forest format {:?}, expected {FOREST_FORMAT:?}",
            doc.format
        )));
    }
    if doc.version != FOREST_VERSION {
        return Err(Error::Schema(format!(
            "unsupported forest version {}, expected {FOREST_VERSION}",
            doc.version
        )));
    }
    Ok(Forest {
        trees: doc.trees,
        n_features: doc.n_features,
        subsample_size: doc.subsample_size,
        config: doc.config,
    })
}
