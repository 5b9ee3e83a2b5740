//! Tree construction: pre-partitioning, cluster selection, splitting,
//! bounding, and assembly of the index.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::cluster1d::{selvalue, two_means_1d, TwoMeansResult};
use crate::linalg::{
    householder_from_direction, principal_component, project, whiten, Direction, Reflection,
};
use crate::matrix::FeatureMatrix;
use crate::pursuit::fastica_one_unit;
use crate::{Error, Result};

const TWO_MEANS_MAX_ITER: usize = 100;

/// How the split direction of a node is found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionRule {
    /// One-unit fixed-point projection pursuit seeded with PC1.
    NonGaussian,
    /// First principal component.
    Pc1,
}

/// Where the split threshold is placed along the direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitRule {
    /// Midpoint of the two projection sub-cluster centroids.
    TwoMeansMidpoint,
    /// Projection of the data centroid.
    CentroidProjection,
}

/// Which frame the child bounding rectangles are computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundingRule {
    /// Householder-reflected frame mapping the split direction onto axis 1;
    /// sibling rectangles cannot overlap.
    ReflectedFrame,
    /// Original coordinates; sibling rectangles may overlap.
    OriginalFrame,
}

/// How the next leaf to split is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Centroid separation over sub-cluster diameter of the projections.
    Selvalue,
    /// Mean squared distance to the node centroid.
    Scatter,
}

/// Minimum leaf population, either as a percentage fed through
/// [`minpts_from_pct`] or as an absolute count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinptsRule {
    Percent(f64),
    Absolute(usize),
}

/// Full parameterization of a build.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    /// Target number of childless nodes.
    pub k: usize,
    pub minpts: MinptsRule,
    pub direction_rule: DirectionRule,
    pub split_rule: SplitRule,
    pub bounding_rule: BoundingRule,
    pub selection_rule: SelectionRule,
    /// Contrast constant, in `[1, 2]`.
    pub c: f64,
    pub fastica_tol: f64,
    pub fastica_max_iter: usize,
    pub pca_tol: f64,
    pub pca_max_iter: usize,
    /// Relative eigenvalue floor for whitening.
    pub whiten_eps: f64,
    /// Geometric tolerance for containment checks.
    pub epsilon: f64,
    pub seed: u64,
}

impl TreeConfig {
    fn preset(
        k: usize,
        direction_rule: DirectionRule,
        split_rule: SplitRule,
        bounding_rule: BoundingRule,
        selection_rule: SelectionRule,
    ) -> Self {
        Self {
            k,
            minpts: MinptsRule::Percent(25.0),
            direction_rule,
            split_rule,
            bounding_rule,
            selection_rule,
            c: 1.0,
            fastica_tol: 1e-6,
            fastica_max_iter: 200,
            pca_tol: 1e-9,
            pca_max_iter: 1000,
            whiten_eps: 1e-10,
            epsilon: 1e-9,
            seed: 0,
        }
    }

    /// Non-Gaussian direction, two-means midpoint split, reflected-frame
    /// bounding, selvalue selection.
    pub fn no_ngp(k: usize) -> Self {
        Self::preset(
            k,
            DirectionRule::NonGaussian,
            SplitRule::TwoMeansMidpoint,
            BoundingRule::ReflectedFrame,
            SelectionRule::Selvalue,
        )
    }

    /// As [`Self::no_ngp`] but bounding in the original frame, so sibling
    /// rectangles may overlap.
    pub fn ngp(k: usize) -> Self {
        Self::preset(
            k,
            DirectionRule::NonGaussian,
            SplitRule::TwoMeansMidpoint,
            BoundingRule::OriginalFrame,
            SelectionRule::Selvalue,
        )
    }

    /// PC1 direction, centroid split, original-frame bounding, scatter
    /// selection.
    pub fn pddp(k: usize) -> Self {
        Self::preset(
            k,
            DirectionRule::Pc1,
            SplitRule::CentroidProjection,
            BoundingRule::OriginalFrame,
            SelectionRule::Scatter,
        )
    }

    /// PC1 direction, centroid split, reflected-frame bounding, scatter
    /// selection.
    pub fn nohis(k: usize) -> Self {
        Self::preset(
            k,
            DirectionRule::Pc1,
            SplitRule::CentroidProjection,
            BoundingRule::ReflectedFrame,
            SelectionRule::Scatter,
        )
    }

    /// Preset name when the four rules match one, `None` otherwise.
    pub fn preset_name(&self) -> Option<&'static str> {
        use BoundingRule::*;
        use DirectionRule::*;
        use SelectionRule::*;
        use SplitRule::*;
        match (
            self.direction_rule,
            self.split_rule,
            self.bounding_rule,
            self.selection_rule,
        ) {
            (NonGaussian, TwoMeansMidpoint, ReflectedFrame, Selvalue) => Some("no-ngp"),
            (NonGaussian, TwoMeansMidpoint, OriginalFrame, Selvalue) => Some("ngp"),
            (Pc1, CentroidProjection, OriginalFrame, Scatter) => Some("pddp"),
            (Pc1, CentroidProjection, ReflectedFrame, Scatter) => Some("nohis"),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        match self.minpts {
            MinptsRule::Percent(p) if !(p > 0.0 && p <= 100.0) => {
                return Err(Error::InvalidConfig(format!(
                    "minpts percentage must lie in (0, 100], got {p}"
                )));
            }
            MinptsRule::Absolute(0) => {
                return Err(Error::InvalidConfig("absolute minpts must be at least 1".into()));
            }
            _ => {}
        }
        if !(1.0..=2.0).contains(&self.c) {
            return Err(Error::InvalidConfig(format!(
                "contrast constant must lie in [1, 2], got {}",
                self.c
            )));
        }
        for (name, v) in [
            ("fastica_tol", self.fastica_tol),
            ("pca_tol", self.pca_tol),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.whiten_eps >= 0.0) || !self.whiten_eps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "whiten_eps must be non-negative, got {}",
                self.whiten_eps
            )));
        }
        if self.pca_max_iter < 1 {
            return Err(Error::InvalidConfig("pca_max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Minimum leaf population for a dataset of `n` rows.
    pub fn resolve_minpts(&self, n: usize) -> usize {
        match self.minpts {
            MinptsRule::Percent(pct) => minpts_from_pct(n, self.k, pct),
            MinptsRule::Absolute(a) => a,
        }
    }
}

/// `max(1, floor((pct/100) * n / k))`.
pub fn minpts_from_pct(n: usize, k: usize, pct: f64) -> usize {
    let raw = (pct / 100.0 * n as f64 / k as f64).floor();
    (raw as usize).max(1)
}

/// Direction, projections, 1-D clustering, and selection score of one
/// candidate leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSummary {
    pub direction: Direction,
    /// Projection of every node row onto `direction`, in row order.
    pub projections: Vec<f64>,
    pub two_means: TwoMeansResult,
    pub selection_score: f64,
}

impl ProjectionSummary {
    pub fn member_count(&self) -> usize {
        self.projections.len()
    }
}

/// Axis-aligned minimum bounding rectangle in some node-local frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Mbr {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Mbr {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::DegenerateInput("MBR has lo > hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Componentwise min/max over a non-empty point iterator.
    pub fn from_points<'a>(mut points: impl Iterator<Item = &'a [f64]>) -> Self {
        let first = points.next().expect("MBR needs at least one point");
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in points {
            for t in 0..lo.len() {
                lo[t] = lo[t].min(p[t]);
                hi[t] = hi[t].max(p[t]);
            }
        }
        Self { lo, hi }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64], eps: f64) -> bool {
        p.len() == self.lo.len()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .zip(p)
                .all(|((l, h), v)| *v >= l - eps && *v <= h + eps)
    }

    /// Squared Euclidean distance from `p` to the rectangle; 0 inside.
    pub fn min_dist2(&self, p: &[f64]) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(p)
            .map(|((l, h), v)| {
                let gap = (l - v).max(v - h).max(0.0);
                gap * gap
            })
            .sum()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// Payload distinguishing directory, leaf, and outlier nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Directory {
        left: u32,
        right: u32,
        /// Threshold along the split direction; projections strictly above it
        /// went right.
        split_offset: f64,
    },
    Leaf { members: Vec<u64> },
    Outlier { members: Vec<u64> },
}

/// One node of the index. Its id is its position in the tree's arena.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexNode {
    pub kind: NodeKind,
    /// Isometry into the node's local frame; identity for original-frame
    /// bounding and for the root.
    pub reflection: Reflection,
    /// Bounding rectangle in the node's local frame.
    pub mbr: Mbr,
    /// Direction of the split that created this node's sibling pair; `None`
    /// only for the root.
    pub direction: Option<Direction>,
}

impl IndexNode {
    pub fn is_childless(&self) -> bool {
        !matches!(self.kind, NodeKind::Directory { .. })
    }

    pub fn members(&self) -> Option<&[u64]> {
        match &self.kind {
            NodeKind::Leaf { members } | NodeKind::Outlier { members } => Some(members),
            NodeKind::Directory { .. } => None,
        }
    }
}

/// Build statistics: split count and the final childless composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildStats {
    pub iterations: usize,
    pub leaf_count: usize,
    pub outlier_count: usize,
}

/// The finished index: an arena of nodes rooted at id 0 plus a shared handle
/// to the indexed dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<IndexNode>,
    config: TreeConfig,
    data: Arc<FeatureMatrix>,
    stats: BuildStats,
}

impl Tree {
    pub(crate) fn from_parts(
        nodes: Vec<IndexNode>,
        config: TreeConfig,
        data: Arc<FeatureMatrix>,
        stats: BuildStats,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyTree);
        }
        Ok(Self {
            nodes,
            config,
            data,
            stats,
        })
    }

    pub fn root(&self) -> u32 {
        0
    }

    pub fn node(&self, id: u32) -> &IndexNode {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[IndexNode] {
        &self.nodes
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn data(&self) -> &Arc<FeatureMatrix> {
        &self.data
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn childless_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_childless()).count()
    }

    /// Ids of childless nodes, in arena order.
    pub fn childless_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_childless())
            .map(|(i, _)| i as u32)
    }
}

/// Direction, projections, clustering, and score for one candidate node.
pub fn pre_partition(points: &FeatureMatrix, cfg: &TreeConfig) -> Result<ProjectionSummary> {
    if points.nrows() < 2 {
        return Err(Error::ZeroVariance);
    }
    let (centered, _mean) = points.centered();
    let direction = match cfg.direction_rule {
        DirectionRule::Pc1 => principal_component(&centered, cfg.pca_tol, cfg.pca_max_iter)?,
        DirectionRule::NonGaussian => {
            let (white, map) = whiten(&centered, cfg.whiten_eps)?;
            let pc1 = principal_component(&centered, cfg.pca_tol, cfg.pca_max_iter)?;
            let init = map.to_whitened(&pc1)?;
            let (w, _converged) =
                fastica_one_unit(&white, &init, cfg.c, cfg.fastica_tol, cfg.fastica_max_iter)?;
            map.to_original(w.components())?
        }
    };
    let projections = project(points, &direction)?;
    let two_means = two_means_1d(&projections, TWO_MEANS_MAX_ITER);
    let selection_score = match cfg.selection_rule {
        SelectionRule::Selvalue => selvalue(&two_means, &projections),
        SelectionRule::Scatter => points.scatter_value(),
    };
    Ok(ProjectionSummary {
        direction,
        projections,
        two_means,
        selection_score,
    })
}

/// Picks the candidate with the maximal selection score; ties go to the
/// larger member count, then the smaller node id.
pub fn select_cluster(candidates: &[(u32, &ProjectionSummary)]) -> Result<u32> {
    if candidates.is_empty() {
        return Err(Error::NoSplittable);
    }
    let best = candidates
        .iter()
        .max_by(|(ida, sa), (idb, sb)| {
            sa.selection_score
                .total_cmp(&sb.selection_score)
                .then(sa.member_count().cmp(&sb.member_count()))
                .then(idb.cmp(ida))
        })
        .unwrap();
    if !(best.1.selection_score > 0.0) {
        return Err(Error::NoSplittable);
    }
    Ok(best.0)
}

/// Splits `points` at the configured offset along the summary direction.
/// Rows whose projection exceeds the offset go right; everything else,
/// boundary included, goes left.
pub fn split(
    points: &FeatureMatrix,
    s: &ProjectionSummary,
    cfg: &TreeConfig,
) -> Result<(FeatureMatrix, FeatureMatrix, f64)> {
    let split_offset = match cfg.split_rule {
        SplitRule::TwoMeansMidpoint => 0.5 * (s.two_means.cp1 + s.two_means.cp2),
        SplitRule::CentroidProjection => s.direction.dot(&points.mean()),
    };
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, &p) in s.projections.iter().enumerate() {
        if p - split_offset > 0.0 {
            right.push(i);
        } else {
            left.push(i);
        }
    }
    if left.is_empty() || right.is_empty() {
        return Err(Error::EmptySide);
    }
    Ok((points.select(&left)?, points.select(&right)?, split_offset))
}

/// Bounds one split side: a reflection into the bounding frame and the MBR of
/// the reflected points.
pub fn bound(side_points: &FeatureMatrix, a: &Direction, cfg: &TreeConfig) -> (Reflection, Mbr) {
    match cfg.bounding_rule {
        BoundingRule::OriginalFrame => {
            (Reflection::Identity, Mbr::from_points(side_points.rows()))
        }
        BoundingRule::ReflectedFrame => {
            let reflection = householder_from_direction(a);
            let mut scratch = vec![0.0; side_points.dim()];
            let mut lo: Option<Vec<f64>> = None;
            let mut hi: Option<Vec<f64>> = None;
            for row in side_points.rows() {
                reflection
                    .apply_into(row, &mut scratch)
                    .expect("direction dimension matches its own points");
                match (&mut lo, &mut hi) {
                    (Some(lo), Some(hi)) => {
                        for t in 0..scratch.len() {
                            lo[t] = lo[t].min(scratch[t]);
                            hi[t] = hi[t].max(scratch[t]);
                        }
                    }
                    _ => {
                        lo = Some(scratch.clone());
                        hi = Some(scratch.clone());
                    }
                }
            }
            let mbr = Mbr {
                lo: lo.expect("side is non-empty"),
                hi: hi.expect("side is non-empty"),
            };
            (reflection, mbr)
        }
    }
}

/// Child classification per the minimum-population rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChildKind {
    Leaf,
    Outlier,
}

/// A child with fewer than `minpts` members becomes an outlier.
pub fn classify_child(member_count: usize, minpts: usize) -> ChildKind {
    if member_count < minpts {
        ChildKind::Outlier
    } else {
        ChildKind::Leaf
    }
}

/// Builds the index over `data`.
///
/// The root starts as a leaf holding every row. Each iteration selects the
/// splittable leaf with the best selection score, splits it, bounds both
/// sides, and classifies the children; outliers and degenerate leaves are
/// kept but never split again. Terminates when the childless-node count
/// reaches `cfg.k` or nothing splittable remains.
pub fn build(data: FeatureMatrix, cfg: TreeConfig) -> Result<Tree> {
    build_shared(Arc::new(data), cfg)
}

/// [`build`] over an already shared dataset handle, so several trees (e.g.
/// one per variant) can index the same rows without copying them.
pub fn build_shared(data: Arc<FeatureMatrix>, cfg: TreeConfig) -> Result<Tree> {
    cfg.validate()?;
    let minpts = cfg.resolve_minpts(data.nrows());

    let root = IndexNode {
        kind: NodeKind::Leaf {
            members: data.ids().to_vec(),
        },
        reflection: Reflection::Identity,
        mbr: Mbr::from_points(data.rows()),
        direction: None,
    };
    let mut nodes = vec![root];
    let mut childless = 1usize;
    let mut iterations = 0usize;

    // Splittable leaves, keyed by node id, carrying their rows and summary.
    let mut candidates: BTreeMap<u32, (FeatureMatrix, ProjectionSummary)> = BTreeMap::new();
    if let Some(summary) = summarize(&data, &cfg) {
        candidates.insert(0, ((*data).clone(), summary));
    }

    while childless < cfg.k {
        let refs: Vec<(u32, &ProjectionSummary)> =
            candidates.iter().map(|(id, (_, s))| (*id, s)).collect();
        let best = match select_cluster(&refs) {
            Ok(id) => id,
            Err(_) => break,
        };
        let (points, summary) = candidates.remove(&best).expect("selected id is a candidate");

        let (left_m, right_m, split_offset) = match split(&points, &summary, &cfg) {
            Ok(parts) => parts,
            // Degenerate projections: the node stays a leaf for good.
            Err(_) => continue,
        };
        let direction = summary.direction;

        let left_id = nodes.len() as u32;
        let right_id = left_id + 1;
        for side in [left_m, right_m] {
            let (reflection, mbr) = bound(&side, &direction, &cfg);
            let is_leaf = classify_child(side.nrows(), minpts) == ChildKind::Leaf;
            let members = side.ids().to_vec();
            let id = nodes.len() as u32;
            nodes.push(IndexNode {
                kind: if is_leaf {
                    NodeKind::Leaf { members }
                } else {
                    NodeKind::Outlier { members }
                },
                reflection,
                mbr,
                direction: Some(direction.clone()),
            });
            if is_leaf {
                if let Some(s) = summarize(&side, &cfg) {
                    candidates.insert(id, (side, s));
                }
            }
        }
        nodes[best as usize].kind = NodeKind::Directory {
            left: left_id,
            right: right_id,
            split_offset,
        };
        childless += 1;
        iterations += 1;
    }

    let leaf_count = nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Leaf { .. }))
        .count();
    let outlier_count = nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Outlier { .. }))
        .count();
    Tree::from_parts(
        nodes,
        cfg,
        data,
        BuildStats {
            iterations,
            leaf_count,
            outlier_count,
        },
    )
}

/// Summary for a prospective candidate, or `None` when the node is
/// unsplittable (too small, zero variance, or zero selection score).
fn summarize(points: &FeatureMatrix, cfg: &TreeConfig) -> Option<ProjectionSummary> {
    match pre_partition(points, cfg) {
        Ok(s) if s.selection_score > 0.0 => Some(s),
        _ => None,
    }
}
