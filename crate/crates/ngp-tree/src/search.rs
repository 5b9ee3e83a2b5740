//! Exact and budgeted k-nearest-neighbor search over a [`Tree`], plus the
//! sequential-scan baseline.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::index::{IndexNode, NodeKind, Tree};
use crate::matrix::FeatureMatrix;
use crate::{Error, Result};

/// Work counters accumulated by one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Query-to-point distance evaluations.
    pub distance_computations: usize,
    /// Childless (leaf or outlier) nodes scanned.
    pub leaves_visited: usize,
    /// Directory nodes expanded.
    pub nodes_expanded: usize,
}

/// Hits ascending by distance (ties by row id) plus the work counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<(u64, f64)>,
    pub stats: SearchStats,
}

/// Cap on the number of childless nodes a budgeted query may scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryBudget {
    max_leaves: usize,
}

impl QueryBudget {
    pub fn new(max_leaves: usize) -> Result<Self> {
        if max_leaves < 1 {
            return Err(Error::InvalidConfig("budget must allow at least one leaf".into()));
        }
        Ok(Self { max_leaves })
    }

    pub fn max_leaves(&self) -> usize {
        self.max_leaves
    }
}

/// Euclidean distance from `q` to a node's bounding rectangle, evaluated in
/// the node's local frame; zero when the reflected query lies inside.
pub fn mindist(q: &[f64], node: &IndexNode) -> Result<f64> {
    if q.len() != node.mbr.dim() {
        return Err(Error::DimensionMismatch {
            expected: node.mbr.dim(),
            got: q.len(),
        });
    }
    let mut scratch = vec![0.0; q.len()];
    Ok(node_mindist2(node, q, &mut scratch)?.sqrt())
}

fn node_mindist2(node: &IndexNode, q: &[f64], scratch: &mut [f64]) -> Result<f64> {
    node.reflection.apply_into(q, scratch)?;
    Ok(node.mbr.min_dist2(scratch))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Running top-k set ordered by (squared distance, row id).
struct TopK {
    heap: BinaryHeap<HitEntry>,
    k: usize,
}

#[derive(PartialEq)]
struct HitEntry {
    dist2: f64,
    id: u64,
}

impl Eq for HitEntry {}

impl Ord for HitEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for HitEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            heap: BinaryHeap::with_capacity(k + 1),
            k,
        }
    }

    fn offer(&mut self, dist2: f64, id: u64) {
        if self.heap.len() < self.k {
            self.heap.push(HitEntry { dist2, id });
        } else if let Some(worst) = self.heap.peek() {
            let candidate = HitEntry { dist2, id };
            if candidate < *worst {
                self.heap.pop();
                self.heap.push(candidate);
            }
        }
    }

    /// Squared distance of the current k-th best, once k hits are held.
    fn bound2(&self) -> Option<f64> {
        if self.heap.len() == self.k {
            self.heap.peek().map(|e| e.dist2)
        } else {
            None
        }
    }

    fn into_hits(self) -> Vec<(u64, f64)> {
        let mut entries = self.heap.into_vec();
        entries.sort_by(|a, b| a.cmp(b));
        entries.into_iter().map(|e| (e.id, e.dist2.sqrt())).collect()
    }
}

#[derive(PartialEq)]
struct NodeEntry {
    dist2: f64,
    id: u32,
}

impl Eq for NodeEntry {}

impl Ord for NodeEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for NodeEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Best-first branch-and-bound. `max_leaves` truncates the traversal after
/// that many childless scans; `trace` records visited childless node ids.
fn knn_inner(
    tree: &Tree,
    q: &[f64],
    k: usize,
    max_leaves: Option<usize>,
    mut trace: Option<&mut Vec<u32>>,
) -> Result<SearchResult> {
    if k < 1 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let data = tree.data();
    if q.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: q.len(),
        });
    }
    if tree.nodes().is_empty() {
        return Err(Error::EmptyTree);
    }

    let mut scratch = vec![0.0; q.len()];
    let mut top = TopK::new(k);
    let mut stats = SearchStats::default();
    let mut queue: BinaryHeap<Reverse<NodeEntry>> = BinaryHeap::new();
    let root = tree.root();
    queue.push(Reverse(NodeEntry {
        dist2: node_mindist2(tree.node(root), q, &mut scratch)?,
        id: root,
    }));

    while let Some(Reverse(entry)) = queue.pop() {
        if let Some(bound) = top.bound2() {
            // Strict: nodes tying the k-th distance may still improve ties.
            if entry.dist2 > bound {
                break;
            }
        }
        let node = tree.node(entry.id);
        match &node.kind {
            NodeKind::Directory { left, right, .. } => {
                stats.nodes_expanded += 1;
                for &child in &[*left, *right] {
                    let d2 = node_mindist2(tree.node(child), q, &mut scratch)?;
                    if top.bound2().is_none_or(|bound| d2 <= bound) {
                        queue.push(Reverse(NodeEntry { dist2: d2, id: child }));
                    }
                }
            }
            NodeKind::Leaf { members } | NodeKind::Outlier { members } => {
                stats.leaves_visited += 1;
                if let Some(trace) = trace.as_deref_mut() {
                    trace.push(entry.id);
                }
                for &id in members {
                    let row = data.row_by_id(id).ok_or_else(|| {
                        Error::Internal(format!("node references unknown row id {id}"))
                    })?;
                    stats.distance_computations += 1;
                    top.offer(dist2(q, row), id);
                }
                if max_leaves.is_some_and(|cap| stats.leaves_visited >= cap) {
                    break;
                }
            }
        }
    }

    Ok(SearchResult {
        hits: top.into_hits(),
        stats,
    })
}

/// Exact k-NN: equals the brute-force result hit-for-hit, including the
/// distance-then-id tie order.
pub fn knn_exact(tree: &Tree, q: &[f64], k: usize) -> Result<SearchResult> {
    knn_inner(tree, q, k, None, None)
}

/// Same traversal as [`knn_exact`], truncated after `budget.max_leaves`
/// childless nodes have been scanned.
pub fn knn_budgeted(tree: &Tree, q: &[f64], k: usize, budget: QueryBudget) -> Result<SearchResult> {
    knn_inner(tree, q, k, Some(budget.max_leaves), None)
}

/// Brute-force k-NN over every row; the correctness oracle and the speed
/// baseline. `distance_computations` always equals the row count.
pub fn sequential_scan(data: &FeatureMatrix, q: &[f64], k: usize) -> Result<SearchResult> {
    if k < 1 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if q.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: q.len(),
        });
    }
    let mut top = TopK::new(k);
    for i in 0..data.nrows() {
        top.offer(dist2(q, data.row(i)), data.id(i));
    }
    Ok(SearchResult {
        hits: top.into_hits(),
        stats: SearchStats {
            distance_computations: data.nrows(),
            leaves_visited: 0,
            nodes_expanded: 0,
        },
    })
}
