//! Random-projection forest for approximate nearest-neighbour search under
//! angular distance (Annoy-style).
//!
//! Every tree splits a node's items by the hyperplane equidistant between two
//! randomly chosen distinct items, recursing until a node holds at most
//! `max_leaf_size` items. Queries walk all trees with one shared priority
//! queue keyed by the margin to each hyperplane, gather candidates until the
//! search budget is met and rank them by exact distance.

mod persist;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::EmbeddingVector;
use crate::corpus::UnitRef;

pub use persist::{load, read_index, save, write_index, FORMAT_VERSION, MAGIC};

/// Norm tolerance for "unit" vectors accepted by build and query.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Attempts at drawing two distinct items before falling back to a scan.
const PAIR_ATTEMPTS: usize = 8;

#[derive(Debug, Error)]
pub enum AnnError {
    #[error("cannot build an index over zero items")]
    Empty,
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("item {item_id} is not unit-norm (norm {norm})")]
    NotUnitNorm { item_id: u64, norm: f64 },
    #[error("query vector is not unit-norm (norm {0})")]
    QueryNotUnitNorm(f64),
    #[error("duplicate item id {0}")]
    DuplicateItemId(u64),
    #[error("invalid build parameters: {0}")]
    InvalidParams(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a TAIX index of a supported version ({0})")]
    FormatVersionMismatch(String),
    #[error("index checksum mismatch (truncated or corrupted file)")]
    ChecksumMismatch,
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Angular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexItem {
    pub item_id: u64,
    pub unit_ref: UnitRef,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        normal: Vec<f32>,
        offset: f32,
        left: u64,
        right: u64,
    },
    Leaf {
        item_ids: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    root: u64,
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: u64) -> &TreeNode {
        &self.nodes[id as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildParams {
    pub tree_count: u16,
    pub max_leaf_size: u32,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            tree_count: 16,
            max_leaf_size: 16,
            seed: 0,
        }
    }
}

impl BuildParams {
    pub fn new(tree_count: u16, max_leaf_size: u32, seed: u64) -> Self {
        Self {
            tree_count,
            max_leaf_size,
            seed,
        }
    }

    fn validate(&self) -> Result<(), AnnError> {
        if self.tree_count < 1 {
            return Err(AnnError::InvalidParams("tree count must be at least 1".into()));
        }
        if self.max_leaf_size < 2 {
            return Err(AnnError::InvalidParams("max leaf size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Default candidate budget for a top-`k` query.
pub fn default_search_budget(k: usize) -> usize {
    (4 * k).max(64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub item_id: u64,
    pub distance: f64,
}

impl Neighbor {
    /// Cosine similarity recovered from the angular distance.
    pub fn similarity(&self) -> f64 {
        1.0 - self.distance * self.distance / 2.0
    }
}

/// `‖a − b‖`, which equals `√(2 − 2·cos θ)` for unit vectors and stays exact
/// (zero) for identical inputs.
pub fn angular_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn rank(mut hits: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    hits.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.item_id.cmp(&b.item_id))
    });
    hits.truncate(k);
    hits
}

fn check_query(dimension: usize, q: &EmbeddingVector, k: usize) -> Result<(), AnnError> {
    if q.dimension() != dimension {
        return Err(AnnError::DimensionMismatch {
            expected: dimension,
            got: q.dimension(),
        });
    }
    if !q.is_unit(UNIT_NORM_TOLERANCE) {
        return Err(AnnError::QueryNotUnitNorm(q.norm()));
    }
    if k == 0 {
        return Err(AnnError::InvalidQuery("k must be at least 1".into()));
    }
    Ok(())
}

/// Exact top-`k` by angular distance, ties by ascending item id.
pub fn brute_force_query(
    items: &[IndexItem],
    q: &EmbeddingVector,
    k: usize,
) -> Result<Vec<Neighbor>, AnnError> {
    let dimension = items.first().map_or(q.dimension(), |i| i.vector.dimension());
    check_query(dimension, q, k)?;
    let mut hits = Vec::with_capacity(items.len());
    for item in items {
        if item.vector.dimension() != dimension {
            return Err(AnnError::DimensionMismatch {
                expected: dimension,
                got: item.vector.dimension(),
            });
        }
        hits.push(Neighbor {
            item_id: item.item_id,
            distance: angular_distance(item.vector.values(), q.values()),
        });
    }
    Ok(rank(hits, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnIndex {
    dimension: usize,
    metric: Metric,
    params: BuildParams,
    items: Vec<IndexItem>,
    trees: Vec<Tree>,
    positions: HashMap<u64, usize>,
}

impl AnnIndex {
    /// Builds the forest. Deterministic in `(items order, params)`; trees are
    /// built in parallel, each with its own RNG stream.
    pub fn build(items: Vec<IndexItem>, params: BuildParams) -> Result<Self, AnnError> {
        params.validate()?;
        let dimension = items.first().ok_or(AnnError::Empty)?.vector.dimension();
        let mut positions = HashMap::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            if item.vector.dimension() != dimension {
                return Err(AnnError::DimensionMismatch {
                    expected: dimension,
                    got: item.vector.dimension(),
                });
            }
            if !item.vector.is_unit(UNIT_NORM_TOLERANCE) {
                return Err(AnnError::NotUnitNorm {
                    item_id: item.item_id,
                    norm: item.vector.norm(),
                });
            }
            if positions.insert(item.item_id, pos).is_some() {
                return Err(AnnError::DuplicateItemId(item.item_id));
            }
        }

        let trees = (0..params.tree_count)
            .into_par_iter()
            .map(|t| {
                let mut builder = TreeBuilder {
                    items: &items,
                    max_leaf: params.max_leaf_size as usize,
                    rng: ChaCha8Rng::seed_from_u64(tree_seed(params.seed, t)),
                    nodes: Vec::new(),
                };
                let all: Vec<usize> = (0..items.len()).collect();
                let root = builder.build(all);
                Tree {
                    root,
                    nodes: builder.nodes,
                }
            })
            .collect();

        Ok(Self {
            dimension,
            metric: Metric::Angular,
            params,
            items,
            trees,
            positions,
        })
    }

    pub(crate) fn from_parts(
        dimension: usize,
        params: BuildParams,
        items: Vec<IndexItem>,
        trees: Vec<Tree>,
    ) -> Result<Self, AnnError> {
        let mut positions = HashMap::with_capacity(items.len());
        for (pos, item) in items.iter().enumerate() {
            if item.vector.dimension() != dimension {
                return Err(AnnError::Corrupt(format!("item {} has wrong dimension", item.item_id)));
            }
            if positions.insert(item.item_id, pos).is_some() {
                return Err(AnnError::Corrupt(format!("duplicate item id {}", item.item_id)));
            }
        }
        for (t, tree) in trees.iter().enumerate() {
            let n = tree.nodes.len() as u64;
            if tree.root >= n {
                return Err(AnnError::Corrupt(format!("tree {t}: root out of range")));
            }
            for node in &tree.nodes {
                match node {
                    TreeNode::Split {
                        normal, left, right, ..
                    } => {
                        if normal.len() != dimension || *left >= n || *right >= n {
                            return Err(AnnError::Corrupt(format!("tree {t}: bad split node")));
                        }
                    }
                    TreeNode::Leaf { item_ids } => {
                        if let Some(id) = item_ids.iter().find(|id| !positions.contains_key(id)) {
                            return Err(AnnError::Corrupt(format!("tree {t}: unknown item {id}")));
                        }
                    }
                }
            }
        }
        Ok(Self {
            dimension,
            metric: Metric::Angular,
            params,
            items,
            trees,
            positions,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn params(&self) -> BuildParams {
        self.params
    }

    pub fn items(&self) -> &[IndexItem] {
        &self.items
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, item_id: u64) -> Option<&IndexItem> {
        self.positions.get(&item_id).map(|&p| &self.items[p])
    }

    pub fn query(
        &self,
        q: &EmbeddingVector,
        k: usize,
        search_budget: usize,
    ) -> Result<Vec<Neighbor>, AnnError> {
        self.query_filtered(q, k, search_budget, |_| true)
    }

    /// Like [`query`](Self::query) but only items accepted by `filter` count
    /// as candidates. The budget applies to accepted candidates.
    pub fn query_filtered<F>(
        &self,
        q: &EmbeddingVector,
        k: usize,
        search_budget: usize,
        filter: F,
    ) -> Result<Vec<Neighbor>, AnnError>
    where
        F: Fn(&IndexItem) -> bool,
    {
        check_query(self.dimension, q, k)?;
        if search_budget < k {
            return Err(AnnError::InvalidQuery(format!(
                "search budget {search_budget} is below k = {k}"
            )));
        }

        let mut seen = vec![false; self.items.len()];
        let mut candidates: Vec<usize> = Vec::with_capacity(search_budget.min(self.items.len()));
        let mut heap = BinaryHeap::with_capacity(self.trees.len() * 4);
        for (t, tree) in self.trees.iter().enumerate() {
            heap.push(Pending {
                priority: f64::INFINITY,
                tree: t,
                node: tree.root,
            });
        }

        while candidates.len() < search_budget {
            let Some(Pending {
                priority,
                tree,
                node,
            }) = heap.pop()
            else {
                break;
            };
            match self.trees[tree].node(node) {
                TreeNode::Split {
                    normal,
                    offset,
                    left,
                    right,
                } => {
                    let margin = dot(normal, q.values()) - f64::from(*offset);
                    heap.push(Pending {
                        priority: priority.min(margin),
                        tree,
                        node: *right,
                    });
                    heap.push(Pending {
                        priority: priority.min(-margin),
                        tree,
                        node: *left,
                    });
                }
                TreeNode::Leaf { item_ids } => {
                    for id in item_ids {
                        let pos = self.positions[id];
                        if !seen[pos] {
                            seen[pos] = true;
                            if filter(&self.items[pos]) {
                                candidates.push(pos);
                            }
                        }
                    }
                }
            }
        }

        let hits = candidates
            .into_iter()
            .map(|pos| {
                let item = &self.items[pos];
                Neighbor {
                    item_id: item.item_id,
                    distance: angular_distance(item.vector.values(), q.values()),
                }
            })
            .collect();
        Ok(rank(hits, k))
    }

    pub fn brute_force_query(&self, q: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>, AnnError> {
        brute_force_query(&self.items, q, k)
    }
}

fn tree_seed(seed: u64, tree: u16) -> u64 {
    // splitmix64 finalizer over (seed, tree) so neighbouring seeds diverge.
    let mut z = seed ^ (u64::from(tree).wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Pending {
    priority: f64,
    tree: usize,
    node: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.tree.cmp(&self.tree))
            .then_with(|| other.node.cmp(&self.node))
    }
}

struct TreeBuilder<'a> {
    items: &'a [IndexItem],
    max_leaf: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, subset: &[usize]) -> u64 {
        let item_ids = subset.iter().map(|&p| self.items[p].item_id).collect();
        self.nodes.push(TreeNode::Leaf { item_ids });
        (self.nodes.len() - 1) as u64
    }

    fn vector(&self, pos: usize) -> &[f32] {
        self.items[pos].vector.values()
    }

    fn pick_pair(&mut self, subset: &[usize]) -> Option<(usize, usize)> {
        let n = subset.len();
        for _ in 0..PAIR_ATTEMPTS {
            let i = self.rng.random_range(0..n);
            let mut j = self.rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            if self.vector(subset[i]) != self.vector(subset[j]) {
                return Some((subset[i], subset[j]));
            }
        }
        let first = subset[0];
        subset
            .iter()
            .copied()
            .find(|&p| self.vector(p) != self.vector(first))
            .map(|p| (first, p))
    }

    fn build(&mut self, subset: Vec<usize>) -> u64 {
        if subset.len() <= self.max_leaf {
            return self.leaf(&subset);
        }
        let Some((a, b)) = self.pick_pair(&subset) else {
            // All points coincide: no hyperplane separates them.
            return self.leaf(&subset);
        };

        let (va, vb) = (self.vector(a), self.vector(b));
        let diff: Vec<f64> = va.iter().zip(vb).map(|(&x, &y)| f64::from(x) - f64::from(y)).collect();
        let len = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        let normal: Vec<f32> = diff.iter().map(|d| (d / len) as f32).collect();
        let midpoint: Vec<f32> = va
            .iter()
            .zip(vb)
            .map(|(&x, &y)| ((f64::from(x) + f64::from(y)) / 2.0) as f32)
            .collect();
        let offset = dot(&normal, &midpoint) as f32;

        let mut left = Vec::new();
        let mut right = Vec::new();
        for &p in &subset {
            let margin = dot(&normal, self.vector(p)) - f64::from(offset);
            let goes_right = if margin > 0.0 {
                true
            } else if margin < 0.0 {
                false
            } else {
                self.rng.random_bool(0.5)
            };
            if goes_right {
                right.push(p);
            } else {
                left.push(p);
            }
        }
        if left.is_empty() || right.is_empty() {
            return self.leaf(&subset);
        }

        let id = self.nodes.len() as u64;
        self.nodes.push(TreeNode::Leaf { item_ids: Vec::new() });
        let left_id = self.build(left);
        let right_id = self.build(right);
        self.nodes[id as usize] = TreeNode::Split {
            normal,
            offset,
            left: left_id,
            right: right_id,
        };
        id
    }
}
