//! Distance computation and per-point neighbor orderings.
//!
//! For each point i the table holds the other points sorted by nondecreasing
//! Euclidean distance, self excluded, up to depth k_max. Equal-distance
//! blocks are ordered by the tie rule; the first k entries of a row are
//! N_k(i), so neighbor sets are nested in k under a fixed tie resolution.

mod kdtree;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::rng::derive_seed;
use kdtree::KdTree;

/// How equal-distance blocks are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieMode {
    /// Tied blocks are permuted uniformly at random, as a pure function of
    /// (seed, query label, distance value, candidate index). Independent of
    /// thread scheduling and iteration order.
    SeededUniform,
    /// Deterministic fallback: ties resolve by ascending index.
    IndexOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieRule {
    pub seed: u64,
    pub mode: TieMode,
}

/// Label used in tie keys for out-of-sample queries, which have no row index.
const QUERY_LABEL: u64 = u64::MAX;

impl TieRule {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            mode: TieMode::SeededUniform,
        }
    }

    pub fn index_order() -> Self {
        Self {
            seed: 0,
            mode: TieMode::IndexOrder,
        }
    }

    #[inline]
    fn key(&self, row_label: u64, idx: u32, d2: f64) -> u64 {
        match self.mode {
            TieMode::SeededUniform => {
                derive_seed(self.seed, &[row_label, d2.to_bits(), idx as u64])
            }
            TieMode::IndexOrder => 0,
        }
    }
}

/// A neighbor candidate with its total ordering: distance first, then tie
/// key, then index. The order is strict, so every search has a unique answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub d2: f64,
    pub key: u64,
    pub idx: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    #[inline]
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.key.cmp(&other.key))
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    #[inline]
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc
}

/// Which k-NN search implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Exhaustive pairwise below [`TREE_THRESHOLD`] points, spatial tree at or above.
    #[default]
    Auto,
    Brute,
    KdTree,
}

/// Point count at which `Backend::Auto` switches to the spatial tree.
pub const TREE_THRESHOLD: usize = 2048;

impl Backend {
    fn resolve(self, n: usize) -> Backend {
        match self {
            Backend::Auto => {
                if n >= TREE_THRESHOLD {
                    Backend::KdTree
                } else {
                    Backend::Brute
                }
            }
            other => other,
        }
    }
}

/// Per-point neighbor orderings N_k(i) for all k <= k_max.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    n: usize,
    k_max: usize,
    tie: TieRule,
    /// Row-major n x k_max neighbor indices, ascending by (distance, tie key, index).
    order: Vec<u32>,
    /// Matching Euclidean distances, nondecreasing along each row.
    distances: Vec<f64>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn tie(&self) -> TieRule {
        self.tie
    }

    /// Full ordered neighbor row for point i.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.order[i * self.k_max..(i + 1) * self.k_max]
    }

    pub fn distances_row(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k_max..(i + 1) * self.k_max]
    }

    /// N_k(i): the first k entries of row i.
    pub fn neighbors(&self, i: usize, k: usize) -> Result<&[u32]> {
        self.check_k(k)?;
        Ok(&self.row(i)[..k])
    }

    pub(crate) fn check_k(&self, k: usize) -> Result<()> {
        if k < 1 || k > self.k_max {
            return Err(Error::KOutOfRange {
                k,
                k_max: self.k_max,
            });
        }
        Ok(())
    }

    /// Debug dump of one row as JSON.
    pub fn row_json(&self, i: usize) -> serde_json::Value {
        serde_json::json!({
            "i": i,
            "neighbors": self.row(i),
            "distances": self.distances_row(i),
        })
    }
}

/// One exact k-NN search against the dataset under the candidate total order.
fn search(
    data: &Dataset,
    tree: Option<&KdTree>,
    query: &[f64],
    k: usize,
    exclude: Option<u32>,
    tie: &TieRule,
    row_label: u64,
) -> Vec<Candidate> {
    if let Some(tree) = tree {
        return tree.knn(data, query, k, exclude, &|idx, d2| tie.key(row_label, idx, d2));
    }
    let n = data.len();
    let mut cands = Vec::with_capacity(n - usize::from(exclude.is_some()));
    for j in 0..n as u32 {
        if Some(j) == exclude {
            continue;
        }
        let d2 = sq_dist(query, data.point(j as usize));
        cands.push(Candidate {
            d2,
            key: tie.key(row_label, j, d2),
            idx: j,
        });
    }
    if k < cands.len() {
        cands.select_nth_unstable(k - 1);
        cands.truncate(k);
    }
    cands.sort_unstable();
    cands
}

pub(crate) struct SearchContext {
    tree: Option<KdTree>,
}

impl SearchContext {
    pub fn new(data: &Dataset, backend: Backend) -> Self {
        let tree = match backend.resolve(data.len()) {
            Backend::KdTree => Some(KdTree::build(data)),
            _ => None,
        };
        Self { tree }
    }

    /// Ordered neighbor row for training point i (self excluded).
    pub fn table_row(&self, data: &Dataset, i: usize, k: usize, tie: &TieRule) -> Vec<Candidate> {
        search(
            data,
            self.tree.as_ref(),
            data.point(i),
            k,
            Some(i as u32),
            tie,
            i as u64,
        )
    }

    /// Ordered neighbors of an out-of-sample query (no self-exclusion).
    pub fn query_row(&self, data: &Dataset, x: &[f64], k: usize, tie: &TieRule) -> Vec<Candidate> {
        search(data, self.tree.as_ref(), x, k, None, tie, QUERY_LABEL)
    }
}

/// Build the neighbor table with the default backend, in parallel when the
/// `parallel` feature is enabled. Deterministic for every thread count.
pub fn build_table(data: &Dataset, k_max: usize, tie: TieRule) -> Result<NeighborTable> {
    build_table_with(data, k_max, tie, Backend::Auto, true)
}

/// Sequential variant with identical output; the benchmark baseline.
pub fn build_table_seq(data: &Dataset, k_max: usize, tie: TieRule) -> Result<NeighborTable> {
    build_table_with(data, k_max, tie, Backend::Auto, false)
}

pub fn build_table_with(
    data: &Dataset,
    k_max: usize,
    tie: TieRule,
    backend: Backend,
    parallel: bool,
) -> Result<NeighborTable> {
    let n = data.len();
    if k_max < 1 || k_max > n - 1 {
        return Err(Error::KOutOfRange {
            k: k_max,
            k_max: n - 1,
        });
    }
    let ctx = SearchContext::new(data, backend);
    let rows = exec::map_indices(n, parallel, |i| ctx.table_row(data, i, k_max, &tie));

    let mut order = Vec::with_capacity(n * k_max);
    let mut distances = Vec::with_capacity(n * k_max);
    for row in rows {
        debug_assert_eq!(row.len(), k_max);
        for cand in row {
            order.push(cand.idx);
            distances.push(cand.d2.sqrt());
        }
    }
    Ok(NeighborTable {
        n,
        k_max,
        tie,
        order,
        distances,
    })
}

/// Indices of the k nearest training points to an out-of-sample query.
pub fn query_neighbors(data: &Dataset, x: &[f64], k: usize, tie: TieRule) -> Result<Vec<usize>> {
    query_neighbors_with(data, x, k, tie, Backend::Auto)
}

pub fn query_neighbors_with(
    data: &Dataset,
    x: &[f64],
    k: usize,
    tie: TieRule,
    backend: Backend,
) -> Result<Vec<usize>> {
    if x.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            actual: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("query point".into()));
    }
    if k < 1 || k > data.len() {
        return Err(Error::KOutOfRange {
            k,
            k_max: data.len(),
        });
    }
    let ctx = SearchContext::new(data, backend);
    Ok(ctx
        .query_row(data, x, k, &tie)
        .into_iter()
        .map(|c| c.idx as usize)
        .collect())
}

/// count[l] = |{j : l in N_k(j)}|, the in-degree of each point in the
/// k-nearest-neighbor digraph. Sums to n * k.
pub fn in_degree(table: &NeighborTable, k: usize) -> Result<Vec<usize>> {
    table.check_k(k)?;
    let mut counts = vec![0usize; table.len()];
    for i in 0..table.len() {
        for &j in &table.row(i)[..k] {
            counts[j as usize] += 1;
        }
    }
    Ok(counts)
}
