//! Benchmark harness: synthetic mixture datasets, recall and timing
//! measurement, and the repeated hold-out evaluation protocol with CSV
//! reporting.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::index::{build_shared, Tree, TreeConfig};
use crate::matrix::FeatureMatrix;
use crate::search::{knn_budgeted, knn_exact, sequential_scan, QueryBudget, SearchResult};
use crate::{Error, Result};

/// Parameters of a synthetic Gaussian-mixture dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    /// Total number of rows.
    pub n: usize,
    /// Dimensionality.
    pub d: usize,
    /// Number of mixture components.
    pub clusters: usize,
    /// Per-cluster standard deviation.
    pub spread: f64,
    /// Minimum pairwise centroid distance, in units of `spread`.
    pub separation: f64,
    /// Ratio of the largest cluster population to the smallest.
    pub imbalance: f64,
    pub seed: u64,
}

impl MixtureSpec {
    /// The 32-cluster, 50 000-row benchmark dataset in `d` dimensions.
    pub fn benchmark(d: usize, seed: u64) -> Self {
        Self {
            n: 50_000,
            d,
            clusters: 32,
            spread: 1.0,
            separation: 3.0,
            imbalance: 6.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        if self.d < 1 {
            return Err(Error::InvalidSpec("d must be at least 1".into()));
        }
        if self.clusters < 1 || self.clusters > self.n {
            return Err(Error::InvalidSpec(format!(
                "clusters must lie in [1, n], got {} with n = {}",
                self.clusters, self.n
            )));
        }
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "spread must be positive, got {}",
                self.spread
            )));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "separation must be non-negative, got {}",
                self.separation
            )));
        }
        if !(self.imbalance >= 1.0) || !self.imbalance.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "imbalance must be at least 1, got {}",
                self.imbalance
            )));
        }
        Ok(())
    }
}

/// Cluster populations summing to `n`, graded geometrically so the largest
/// is `imbalance` times the smallest.
fn cluster_sizes(n: usize, clusters: usize, imbalance: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..clusters)
        .map(|i| {
            if clusters == 1 {
                1.0
            } else {
                imbalance.powf(i as f64 / (clusters - 1) as f64)
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut sizes: Vec<usize> = weights
        .iter()
        .map(|w| ((w / total * n as f64).floor() as usize).max(1))
        .collect();
    // Push the rounding remainder onto the clusters in id order, largest
    // first when shrinking is needed.
    loop {
        let assigned: usize = sizes.iter().sum();
        if assigned == n {
            break;
        }
        if assigned < n {
            let mut left = n - assigned;
            for s in sizes.iter_mut().rev() {
                if left == 0 {
                    break;
                }
                *s += 1;
                left -= 1;
            }
        } else {
            let mut extra = assigned - n;
            for s in sizes.iter_mut().rev() {
                if extra == 0 {
                    break;
                }
                if *s > 1 {
                    *s -= 1;
                    extra -= 1;
                }
            }
        }
    }
    sizes
}

/// Centroids with pairwise distance at least `min_dist`, sampled uniformly
/// from a cube that grows whenever rejection stalls.
fn sample_centroids(
    rng: &mut ChaCha8Rng,
    clusters: usize,
    d: usize,
    min_dist: f64,
) -> Vec<Vec<f64>> {
    let mut radius = (min_dist * (clusters as f64).powf(1.0 / d as f64)).max(1.0);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(clusters);
    let mut stale = 0usize;
    while centroids.len() < clusters {
        let cand: Vec<f64> = (0..d).map(|_| rng.gen_range(-radius..=radius)).collect();
        let ok = centroids.iter().all(|c| {
            let d2: f64 = c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= min_dist
        });
        if ok {
            centroids.push(cand);
            stale = 0;
        } else {
            stale += 1;
            if stale >= 1000 {
                radius *= 1.5;
                stale = 0;
            }
        }
    }
    centroids
}

/// A uniformly random rotation, as column vectors.
fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let gauss = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    (0..d).map(|j| q.column(j).iter().copied().collect()).collect()
}

/// What [`generate_mixture_labeled`] knows about the rows it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGroundTruth {
    /// Component index of each row, in row order.
    pub labels: Vec<usize>,
    /// Component centers.
    pub centroids: Vec<Vec<f64>>,
    /// Unit direction of each component's largest-variance axis.
    pub principal_axes: Vec<Vec<f64>>,
}

/// Generates a Gaussian mixture dataset along with its ground truth.
///
/// Each component is an anisotropic Gaussian: axis scales decay
/// geometrically from (about) `spread` inside a random orientation, so
/// every component has a well-defined largest-variance axis and a low
/// effective dimension. Rows are grouped by component and assigned ids
/// `0..n`. Identical specs produce identical output.
pub fn generate_mixture_labeled(
    spec: &MixtureSpec,
) -> Result<(FeatureMatrix, MixtureGroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centroids = sample_centroids(&mut rng, spec.clusters, spec.d, spec.separation * spec.spread);
    let sizes = cluster_sizes(spec.n, spec.clusters, spec.imbalance);

    let mut values = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    let mut principal_axes = Vec::with_capacity(spec.clusters);
    let mut point = vec![0.0f64; spec.d];
    for (label, (centroid, &size)) in centroids.iter().zip(&sizes).enumerate() {
        let basis = random_rotation(&mut rng, spec.d);
        let scale: f64 = rng.gen_range(0.7..=1.3) * spec.spread;
        let decay: f64 = rng.gen_range(0.70..=0.88);
        principal_axes.push(basis[0].clone());
        for _ in 0..size {
            point.copy_from_slice(centroid);
            let mut sigma = scale;
            for axis in &basis {
                let z: f64 = StandardNormal.sample(&mut rng);
                for (p, a) in point.iter_mut().zip(axis) {
                    *p += sigma * z * a;
                }
                sigma *= decay;
            }
            values.extend_from_slice(&point);
            labels.push(label);
        }
    }
    let ids = (0..spec.n as u64).collect();
    let matrix = FeatureMatrix::new(spec.d, values, ids)?;
    Ok((
        matrix,
        MixtureGroundTruth {
            labels,
            centroids,
            principal_axes,
        },
    ))
}

/// [`generate_mixture_labeled`] without the ground truth.
pub fn generate_mixture(spec: &MixtureSpec) -> Result<FeatureMatrix> {
    generate_mixture_labeled(spec).map(|(m, _)| m)
}

/// Fraction of `relevant` ids present in `retrieved`.
pub fn recall(relevant: &[u64], retrieved: &[u64]) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevant);
    }
    let retrieved: HashSet<u64> = retrieved.iter().copied().collect();
    let hits = relevant.iter().filter(|id| retrieved.contains(id)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Wall-clock seconds `action` takes, on the monotonic clock.
pub fn measure_response_time<T>(action: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = action();
    (out, start.elapsed().as_secs_f64())
}

/// Runs `action` three times and reports the median duration alongside the
/// last result, damping scheduler noise.
pub fn measure_median_of_three<T>(mut action: impl FnMut() -> T) -> (T, f64) {
    let (_, t1) = measure_response_time(&mut action);
    let (_, t2) = measure_response_time(&mut action);
    let (out, t3) = measure_response_time(&mut action);
    let mut ts = [t1, t2, t3];
    ts.sort_by(f64::total_cmp);
    (out, ts[1])
}

/// Shape of the repeated hold-out evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub repetitions: usize,
    pub queries_per_rep: usize,
    pub knn_k: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            repetitions: 10,
            queries_per_rep: 20,
            knn_k: 20,
        }
    }
}

/// One search strategy under evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum BenchVariant {
    /// A tree built with `config`, reported under `name`.
    Tree { name: String, config: TreeConfig },
    /// The full-scan baseline.
    SeqScan,
}

impl BenchVariant {
    pub fn tree(name: impl Into<String>, config: TreeConfig) -> Self {
        Self::Tree {
            name: name.into(),
            config,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Tree { name, .. } => name,
            Self::SeqScan => "seqscan",
        }
    }
}

/// One timed query outcome. `budget` is the leaf cap, or `0` for an exact
/// (uncapped) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub repetition: usize,
    pub query: usize,
    pub variant: String,
    pub knn_k: usize,
    pub budget: usize,
    pub recall: f64,
    pub response_time_s: f64,
    pub leaves_visited: usize,
    pub distance_computations: usize,
}

/// Mean and sample standard deviation over repetition means for one
/// variant/metric pair. Budgeted variants are reported as `name@budget`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub variant: String,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
}

/// Everything one evaluation produces.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRecord>,
    /// Host summary for the accompanying prose; never written into the CSVs.
    pub environment: String,
}

pub const RUNS_HEADER: &str = "repetition,query,variant,knn_k,budget,recall,response_time_s,leaves_visited,distance_computations";
pub const AGGREGATES_HEADER: &str = "variant,metric,mean,stddev";

const METRICS: [&str; 4] = [
    "recall",
    "response_time_s",
    "leaves_visited",
    "distance_computations",
];

fn aggregate_key(variant: &str, budget: usize) -> String {
    if budget == 0 {
        variant.to_string()
    } else {
        format!("{variant}@{budget}")
    }
}

fn metric_value(run: &RunRecord, metric: &str) -> f64 {
    match metric {
        "recall" => run.recall,
        "response_time_s" => run.response_time_s,
        "leaves_visited" => run.leaves_visited as f64,
        "distance_computations" => run.distance_computations as f64,
        _ => unreachable!("unknown metric {metric}"),
    }
}

/// Per-repetition query means, then mean and sample standard deviation over
/// those repetition means, in first-appearance order of `variant@budget`.
pub fn recompute_aggregates(runs: &[RunRecord]) -> Vec<AggregateRecord> {
    let mut keys: Vec<String> = Vec::new();
    for run in runs {
        let key = aggregate_key(&run.variant, run.budget);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = Vec::new();
    for key in &keys {
        let group: Vec<&RunRecord> = runs
            .iter()
            .filter(|r| aggregate_key(&r.variant, r.budget) == *key)
            .collect();
        let mut reps: Vec<usize> = group.iter().map(|r| r.repetition).collect();
        reps.sort_unstable();
        reps.dedup();
        for metric in METRICS {
            let rep_means: Vec<f64> = reps
                .iter()
                .map(|&rep| {
                    let vals: Vec<f64> = group
                        .iter()
                        .filter(|r| r.repetition == rep)
                        .map(|r| metric_value(r, metric))
                        .collect();
                    vals.iter().sum::<f64>() / vals.len() as f64
                })
                .collect();
            let mean = rep_means.iter().sum::<f64>() / rep_means.len() as f64;
            let stddev = if rep_means.len() < 2 {
                0.0
            } else {
                let ss: f64 = rep_means.iter().map(|m| (m - mean) * (m - mean)).sum();
                (ss / (rep_means.len() - 1) as f64).sqrt()
            };
            out.push(AggregateRecord {
                variant: key.clone(),
                metric: metric.to_string(),
                mean,
                stddev,
            });
        }
    }
    out
}

/// Checks that `aggregates` match a recomputation from `runs` to within
/// `1e-12` on every mean and standard deviation.
pub fn verify_aggregates(runs: &[RunRecord], aggregates: &[AggregateRecord]) -> Result<()> {
    let fresh = recompute_aggregates(runs);
    if fresh.len() != aggregates.len() {
        return Err(Error::Internal(format!(
            "aggregate count mismatch: {} stored, {} recomputed",
            aggregates.len(),
            fresh.len()
        )));
    }
    for (stored, new) in aggregates.iter().zip(&fresh) {
        if stored.variant != new.variant || stored.metric != new.metric {
            return Err(Error::Internal(format!(
                "aggregate order mismatch at {}/{}",
                stored.variant, stored.metric
            )));
        }
        if (stored.mean - new.mean).abs() > 1e-12 || (stored.stddev - new.stddev).abs() > 1e-12 {
            return Err(Error::Internal(format!(
                "aggregate {}/{} does not match its rows",
                stored.variant, stored.metric
            )));
        }
    }
    Ok(())
}

impl BenchReport {
    pub fn write_runs_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{RUNS_HEADER}")?;
        for r in &self.runs {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.repetition,
                r.query,
                r.variant,
                r.knn_k,
                r.budget,
                r.recall,
                r.response_time_s,
                r.leaves_visited,
                r.distance_computations
            )?;
        }
        Ok(())
    }

    pub fn write_aggregates_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{AGGREGATES_HEADER}")?;
        for a in &self.aggregates {
            writeln!(w, "{},{},{},{}", a.variant, a.metric, a.mean, a.stddev)?;
        }
        Ok(())
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, line: u64, what: &'static str) -> Result<T> {
    field.parse().map_err(|_| Error::Format {
        context: "runs csv",
        offset: line,
        detail: format!("bad {what}: {field:?}"),
    })
}

/// Reads a runs CSV written by [`BenchReport::write_runs_csv`]. The offset
/// in any error is a 1-based line number.
pub fn read_runs_csv(r: impl Read) -> Result<Vec<RunRecord>> {
    let reader = BufReader::new(r);
    let mut runs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        if i == 0 {
            if line != RUNS_HEADER {
                return Err(Error::Format {
                    context: "runs csv",
                    offset: lineno,
                    detail: format!("unexpected header {line:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Format {
                context: "runs csv",
                offset: lineno,
                detail: format!("expected 9 fields, got {}", fields.len()),
            });
        }
        runs.push(RunRecord {
            repetition: parse_field(fields[0], lineno, "repetition")?,
            query: parse_field(fields[1], lineno, "query")?,
            variant: fields[2].to_string(),
            knn_k: parse_field(fields[3], lineno, "knn_k")?,
            budget: parse_field(fields[4], lineno, "budget")?,
            recall: parse_field(fields[5], lineno, "recall")?,
            response_time_s: parse_field(fields[6], lineno, "response_time_s")?,
            leaves_visited: parse_field(fields[7], lineno, "leaves_visited")?,
            distance_computations: parse_field(fields[8], lineno, "distance_computations")?,
        });
    }
    Ok(runs)
}

fn timed_query(run: impl FnMut() -> Result<SearchResult>) -> Result<(SearchResult, f64)> {
    let mut run = run;
    let mut last: Option<Result<SearchResult>> = None;
    let (_, t) = measure_median_of_three(|| last = Some(run()));
    match last.expect("measure ran the action") {
        Ok(res) => Ok((res, t)),
        Err(e) => Err(e),
    }
}

/// Repeated hold-out evaluation.
///
/// Each repetition draws `queries_per_rep` rows as queries, indexes the
/// rest under every tree variant, computes exact `knn_k`-NN ground truth
/// among the indexed rows by sequential scan, then times, for each variant
/// and query, one exact run plus one budgeted run per entry of `budgets`
/// (the scan baseline has no budgeted runs). Timing is median-of-three and
/// strictly sequential; with `threads > 1` only the untimed build and
/// ground-truth phases are parallelized, so counters and recalls are
/// independent of `threads`.
pub fn cross_validate(
    data: &FeatureMatrix,
    variants: &[BenchVariant],
    protocol: Protocol,
    budgets: &[usize],
    seed: u64,
    threads: usize,
) -> Result<BenchReport> {
    if protocol.repetitions < 1 || protocol.queries_per_rep < 1 || protocol.knn_k < 1 {
        return Err(Error::InvalidConfig(
            "protocol fields must all be at least 1".into(),
        ));
    }
    if variants.is_empty() {
        return Err(Error::InvalidConfig("no variants to evaluate".into()));
    }
    if budgets.iter().any(|&b| b == 0) {
        return Err(Error::InvalidConfig("budgets must be positive".into()));
    }
    let n = data.nrows();
    if n <= protocol.queries_per_rep {
        return Err(Error::InsufficientData(format!(
            "need more than {} rows to hold out {} queries, got {n}",
            protocol.queries_per_rep, protocol.queries_per_rep
        )));
    }
    if n - protocol.queries_per_rep < protocol.knn_k {
        return Err(Error::InsufficientData(format!(
            "{} indexed rows cannot answer {}-NN queries",
            n - protocol.queries_per_rep,
            protocol.knn_k
        )));
    }
    let threads = threads.max(1);

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let rep_seeds: Vec<u64> = (0..protocol.repetitions).map(|_| master.gen()).collect();

    let mut runs = Vec::new();
    for (rep, &rep_seed) in rep_seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
        let mut holdout: Vec<usize> = sample(&mut rng, n, protocol.queries_per_rep).into_vec();
        let queries: Vec<Vec<f64>> = holdout.iter().map(|&i| data.row(i).to_vec()).collect();
        holdout.sort_unstable();
        let kept: Vec<usize> = (0..n).filter(|i| holdout.binary_search(i).is_err()).collect();
        let indexed = Arc::new(data.select(&kept)?);

        let tree_configs: Vec<(usize, TreeConfig)> = variants
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v {
                BenchVariant::Tree { config, .. } => Some((i, config.clone())),
                BenchVariant::SeqScan => None,
            })
            .collect();
        let mut trees: Vec<Option<Tree>> = (0..variants.len()).map(|_| None).collect();
        let mut truths: Vec<Vec<u64>> = vec![Vec::new(); queries.len()];
        if threads > 1 {
            let mut built: Vec<(usize, Result<Tree>)> = Vec::new();
            let mut scanned: Vec<(usize, Result<Vec<u64>>)> = Vec::new();
            std::thread::scope(|s| {
                let mut tree_handles = Vec::new();
                for (slot, cfg) in &tree_configs {
                    let indexed = Arc::clone(&indexed);
                    let cfg = cfg.clone();
                    tree_handles.push((*slot, s.spawn(move || build_shared(indexed, cfg))));
                }
                let chunk = queries.len().div_ceil(threads);
                let mut scan_handles = Vec::new();
                for (ci, qs) in queries.chunks(chunk).enumerate() {
                    let indexed = Arc::clone(&indexed);
                    scan_handles.push((ci * chunk, s.spawn(move || {
                        qs.iter()
                            .map(|q| {
                                sequential_scan(&indexed, q, protocol.knn_k)
                                    .map(|r| r.hits.iter().map(|&(id, _)| id).collect())
                            })
                            .collect::<Result<Vec<Vec<u64>>>>()
                    })));
                }
                for (slot, h) in tree_handles {
                    built.push((slot, h.join().expect("build thread panicked")));
                }
                for (base, h) in scan_handles {
                    match h.join().expect("scan thread panicked") {
                        Ok(gt) => {
                            for (off, ids) in gt.into_iter().enumerate() {
                                scanned.push((base + off, Ok(ids)));
                            }
                        }
                        Err(e) => scanned.push((base, Err(e))),
                    }
                }
            });
            for (slot, tree) in built {
                trees[slot] = Some(tree?);
            }
            for (qi, ids) in scanned {
                truths[qi] = ids?;
            }
        } else {
            for (slot, cfg) in &tree_configs {
                trees[*slot] = Some(build_shared(Arc::clone(&indexed), cfg.clone())?);
            }
            for (qi, q) in queries.iter().enumerate() {
                let res = sequential_scan(&indexed, q, protocol.knn_k)?;
                truths[qi] = res.hits.iter().map(|&(id, _)| id).collect();
            }
        }

        for (qi, q) in queries.iter().enumerate() {
            for (vi, variant) in variants.iter().enumerate() {
                let mut record = |budget: usize, res: SearchResult, time: f64| -> Result<()> {
                    let retrieved: Vec<u64> = res.hits.iter().map(|&(id, _)| id).collect();
                    runs.push(RunRecord {
                        repetition: rep,
                        query: qi,
                        variant: variant.name().to_string(),
                        knn_k: protocol.knn_k,
                        budget,
                        recall: recall(&truths[qi], &retrieved)?,
                        response_time_s: time,
                        leaves_visited: res.stats.leaves_visited,
                        distance_computations: res.stats.distance_computations,
                    });
                    Ok(())
                };
                match variant {
                    BenchVariant::SeqScan => {
                        let (res, t) =
                            timed_query(|| sequential_scan(&indexed, q, protocol.knn_k))?;
                        record(0, res, t)?;
                    }
                    BenchVariant::Tree { .. } => {
                        let tree = trees[vi].as_ref().expect("tree built for variant");
                        let (res, t) = timed_query(|| knn_exact(tree, q, protocol.knn_k))?;
                        record(0, res, t)?;
                        for &b in budgets {
                            let budget = QueryBudget::new(b)?;
                            let (res, t) =
                                timed_query(|| knn_budgeted(tree, q, protocol.knn_k, budget))?;
                            record(b, res, t)?;
                        }
                    }
                }
            }
        }
    }

    let aggregates = recompute_aggregates(&runs);
    let environment = format!(
        "{} {} | {} threads requested | timing: median of three, sequential",
        std::env::consts::OS,
        std::env::consts::ARCH,
        threads
    );
    Ok(BenchReport {
        runs,
        aggregates,
        environment,
    })
}
