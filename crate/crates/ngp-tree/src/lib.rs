//! Divisive projection-pursuit index for exact and budgeted k-nearest-neighbor
//! search over high-dimensional real vectors.
//!
//! The index is an unbalanced binary tree built by repeatedly selecting the
//! most clustered leaf, splitting it along a one-dimensional projection, and
//! bounding both sides with minimum bounding rectangles. The split direction
//! is found either by one-unit fixed-point projection pursuit (maximizing a
//! negentropy approximation of the projections) or by the first principal
//! component. Bounding can happen in a Householder-reflected frame that maps
//! the split direction onto the first coordinate axis, which makes sibling
//! rectangles provably disjoint, or in the original frame, where they may
//! overlap.
//!
//! Four preset configurations cover the main design points:
//!
//! | preset   | direction     | split offset        | bounding frame | selection |
//! |----------|---------------|---------------------|----------------|-----------|
//! | `no-ngp` | non-Gaussian  | two-means midpoint  | reflected      | selvalue  |
//! | `ngp`    | non-Gaussian  | two-means midpoint  | original       | selvalue  |
//! | `pddp`   | PC1           | centroid projection | original       | scatter   |
//! | `nohis`  | PC1           | centroid projection | reflected      | scatter   |
//!
//! Search is best-first branch-and-bound ordered by MINDIST (the Euclidean
//! distance from the query to a node's rectangle, evaluated in that node's
//! frame), with an optional budget on how many childless nodes may be
//! scanned. A sequential-scan baseline and a benchmark harness with CSV
//! reports round out the crate.

pub mod cli;
pub mod cluster1d;
pub mod eval;
pub mod index;
pub mod linalg;
pub mod matrix;
pub mod persist;
pub mod pursuit;
pub mod search;
pub mod vecfile;

pub use cluster1d::{diameter, selvalue, two_means_1d, TwoMeansResult};
pub use eval::{
    cross_validate, generate_mixture, generate_mixture_labeled, measure_median_of_three,
    measure_response_time, read_runs_csv, recall, recompute_aggregates, verify_aggregates,
    AggregateRecord, BenchReport, BenchVariant, MixtureGroundTruth, MixtureSpec, Protocol,
    RunRecord,
};
pub use index::{
    build, build_shared, classify_child, minpts_from_pct, pre_partition, select_cluster, split,
    BoundingRule, BuildStats, ChildKind, DirectionRule, IndexNode, Mbr, MinptsRule, NodeKind,
    ProjectionSummary, SelectionRule, SplitRule, Tree, TreeConfig,
};
pub use linalg::{
    householder_from_direction, principal_component, project, whiten, Direction, Reflection,
    Whitening,
};
pub use matrix::FeatureMatrix;
pub use persist::{load_tree, save_tree, tree_from_bytes, tree_to_bytes};
pub use pursuit::{fastica_one_unit, negentropy_approx, Contrast};
pub use search::{
    knn_budgeted, knn_exact, mindist, sequential_scan, QueryBudget, SearchResult, SearchStats,
};
pub use vecfile::{
    read_csv_vectors, read_packed, read_vectors_path, write_csv_vectors, write_packed,
    write_vectors_path,
};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no splittable cluster remains")]
    NoSplittable,
    #[error("split produced an empty side")]
    EmptySide,
    #[error("tree has no nodes")]
    EmptyTree,
    #[error("dataset is empty")]
    EmptyData,
    #[error("relevant set is empty")]
    EmptyRelevant,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed {context} at byte offset {offset}: {detail}")]
    Format {
        context: &'static str,
        offset: u64,
        detail: String,
    },
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
