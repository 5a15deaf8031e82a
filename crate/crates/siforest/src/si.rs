//! Set-partitioned isolation forest.
//!
//! Rows are scans, but the entity under test is the IP that owns them. The
//! grouped builder adds one stopping rule to the baseline forest: a node
//! whose rows all share one group key becomes a leaf immediately, keeping
//! that key (the baseline keeps splitting until rows are single or
//! indistinguishable). Row scores are then aggregated per IP and the
//! top-scoring IPs are flagged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{
    draw_subsample, fit_with_sampler, score_rows, walk_unchecked, Forest, ForestConfig, GroupRefs,
    Node, PureLeafAdjust,
};
use crate::preprocess::FlatTable;
use crate::rng::choose_distinct;

/// Numeric feature rows with a parallel group key (IP) per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedTable {
    rows: Vec<Vec<f64>>,
    group_of: Vec<u32>,
    names: Vec<String>,
}

impl GroupedTable {
    /// Pairs each row with its group key. Keys are interned in
    /// first-appearance order.
    pub fn new(rows: Vec<Vec<f64>>, keys: &[String]) -> Result<Self> {
        if rows.len() != keys.len() {
            return Err(Error::Schema(format!(
                "{} rows but {} group keys",
                rows.len(),
                keys.len()
            )));
        }
        let mut names: Vec<String> = Vec::new();
        let mut ids: BTreeMap<&str, u32> = BTreeMap::new();
        let mut group_of = Vec::with_capacity(keys.len());
        for key in keys {
            let id = *ids.entry(key).or_insert_with(|| {
                names.push(key.clone());
                (names.len() - 1) as u32
            });
            group_of.push(id);
        }
        Ok(GroupedTable {
            rows,
            group_of,
            names,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Group key of row `i`.
    pub fn key_of(&self, i: usize) -> &str {
        &self.names[self.group_of[i] as usize]
    }

    /// Distinct group keys in first-appearance order.
    pub fn group_names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_groups(&self) -> usize {
        self.names.len()
    }

    /// Row keys, one per row.
    pub fn keys(&self) -> Vec<String> {
        self.group_of
            .iter()
            .map(|&g| self.names[g as usize].clone())
            .collect()
    }

    /// Row indices of each group, in group-id order.
    fn rows_by_group(&self) -> Vec<Vec<u32>> {
        let mut grouped = vec![Vec::new(); self.names.len()];
        for (i, &g) in self.group_of.iter().enumerate() {
            grouped[g as usize].push(i as u32);
        }
        grouped
    }
}

impl From<&FlatTable> for GroupedTable {
    fn from(table: &FlatTable) -> Self {
        GroupedTable::new(table.rows().to_vec(), table.group_keys())
            .expect("flat tables have one key per row")
    }
}

/// How each tree's training rows are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Rows uniformly without replacement; a group may be partially present.
    #[default]
    RowUniform,
    /// Whole groups in random order until the row budget is met; the group
    /// that crosses the budget contributes a random subset.
    GroupStratified,
}

/// How per-row scores combine into one score per IP.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Per-IP maximum: the most anomalous scan speaks for the IP.
    #[default]
    Extreme,
    /// Per-IP arithmetic mean.
    Mean,
}

/// Parameters for the set-partitioned forest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SiForestConfig {
    pub forest: ForestConfig,
    pub aggregation: Aggregation,
    /// Path-length contribution of multi-row group-pure leaves.
    pub pure_leaf: PureLeafAdjust,
    pub sampler: Sampler,
}

/// Draws whole groups in random order until `budget` rows are collected.
fn draw_group_subsample(
    rng: &mut rand_chacha::ChaCha8Rng,
    groups: &[Vec<u32>],
    budget: usize,
) -> Vec<u32> {
    use rand::Rng;
    let n_units = groups.len();
    let mut pool: Vec<usize> = (0..n_units).collect();
    let mut out = Vec::with_capacity(budget);
    let mut i = 0;
    while out.len() < budget {
        let j = rng.random_range(i..n_units);
        pool.swap(i, j);
        let unit = &groups[pool[i]];
        let need = budget - out.len();
        if unit.len() <= need {
            out.extend_from_slice(unit);
        } else {
            let picked = choose_distinct(rng, unit.len(), need);
            out.extend(picked.into_iter().map(|k| unit[k]));
        }
        i += 1;
    }
    out
}

/// Fits a set-partitioned forest over `table`. Identical to the baseline
/// fit except that group-pure nodes stop splitting immediately and keep
/// their group key. With all-distinct keys the result is structurally equal
/// to `fit_forest` under the same config and seed.
pub fn fit_si_forest(table: &GroupedTable, cfg: &SiForestConfig) -> Result<Forest> {
    let groups = GroupRefs {
        group_of: &table.group_of,
        names: &table.names,
    };
    match cfg.sampler {
        Sampler::RowUniform => {
            let n_rows = table.rows.len();
            fit_with_sampler(&table.rows, cfg.forest, Some(groups), move |rng, budget| {
                draw_subsample(rng, n_rows, budget)
            })
        }
        Sampler::GroupStratified => {
            let by_group = table.rows_by_group();
            fit_with_sampler(&table.rows, cfg.forest, Some(groups), move |rng, budget| {
                draw_group_subsample(rng, &by_group, budget)
            })
        }
    }
}

/// Path length in a grouped tree: edges to the reached leaf plus the leaf's
/// adjustment (`expected_path_c(size)`, or raw depth for group-pure leaves
/// under [`PureLeafAdjust::RawDepth`]).
pub fn si_path_length(tree: &Node, row: &[f64], pure_leaf: PureLeafAdjust) -> Result<f64> {
    crate::forest::path_length(tree, row)?;
    Ok(walk_unchecked(tree, row, pure_leaf))
}

/// Scores every row of `table` in input order.
pub fn si_score_table(
    forest: &Forest,
    table: &GroupedTable,
    pure_leaf: PureLeafAdjust,
) -> Result<Vec<(usize, f64)>> {
    let scores = score_rows(forest, &table.rows, pure_leaf)?;
    Ok(scores.into_iter().enumerate().collect())
}

/// Combines row scores into one score per group, sorted by group key.
pub fn aggregate_by_ip(
    row_scores: &[(usize, f64)],
    groups: &[String],
    mode: Aggregation,
) -> Result<Vec<(String, f64)>> {
    if row_scores.len() != groups.len() {
        return Err(Error::Data(format!(
            "{} row scores but {} group keys",
            row_scores.len(),
            groups.len()
        )));
    }
    let mut acc: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for &(index, score) in row_scores {
        let key = groups
            .get(index)
            .ok_or_else(|| Error::Data(format!("row index {index} has no group key")))?;
        let entry = acc.entry(key).or_insert((f64::NEG_INFINITY, 0.0, 0.0));
        entry.0 = entry.0.max(score);
        entry.1 += score;
        entry.2 += 1.0;
    }
    Ok(acc
        .into_iter()
        .map(|(key, (max, sum, count))| {
            let value = match mode {
                Aggregation::Extreme => max,
                Aggregation::Mean => sum / count,
            };
            (key.to_string(), value)
        })
        .collect())
}

/// Picks the `k` highest-scoring entries; ties break toward the
/// lexicographically smaller key.
pub fn flag_top_k(scores: &[(String, f64)], k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<&(String, f64)> = scores.iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).cloned().collect()
}

/// Number of entities to flag for a contamination fraction.
pub fn top_k_count(contamination: f64, n: usize) -> usize {
    // ceil with a guard against binary rounding lifting exact products.
    let k = ((contamination * n as f64) - 1e-9).ceil().max(1.0) as usize;
    k.min(n)
}

/// Per-IP scores and the flagged subset.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectResult {
    /// Every IP with its aggregated score, sorted by IP.
    pub per_ip: Vec<(String, f64)>,
    /// The top `ceil(contamination * n_ips)` IPs, highest score first,
    /// ties broken by IP ascending.
    pub flagged: Vec<(String, f64)>,
}

/// Scores all rows, aggregates per IP, and flags the top fraction.
pub fn detect_ips(
    forest: &Forest,
    table: &GroupedTable,
    cfg: &SiForestConfig,
    contamination: f64,
) -> Result<DetectResult> {
    if !contamination.is_finite() || contamination <= 0.0 || contamination >= 1.0 {
        return Err(Error::Config(format!(
            "contamination must be within (0, 1), got {contamination}"
        )));
    }
    let row_scores = si_score_table(forest, table, cfg.pure_leaf)?;
    let per_ip = aggregate_by_ip(&row_scores, &table.keys(), cfg.aggregation)?;
    let k = top_k_count(contamination, per_ip.len());
    let flagged = flag_top_k(&per_ip, k);
    Ok(DetectResult { per_ip, flagged })
}
