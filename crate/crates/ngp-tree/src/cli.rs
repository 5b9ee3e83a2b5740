//! Command-line interface: dataset generation, index builds, queries, and
//! the benchmark protocol.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::eval::{cross_validate, generate_mixture, BenchVariant, MixtureSpec, Protocol};
use crate::index::{build, MinptsRule, TreeConfig};
use crate::persist::{load_tree, save_tree};
use crate::search::{knn_budgeted, knn_exact, QueryBudget, SearchResult};
use crate::vecfile::{atomic_write, read_vectors_path, write_vectors_path};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "ngpt",
    version,
    about = "Projection-pursuit tree index for exact and budgeted k-NN search"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for dataset generation and benchmark sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for untimed benchmark phases.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic Gaussian-mixture vector file.
    Gen(GenArgs),
    /// Build an index over a vector file and persist it.
    Build(BuildArgs),
    /// Run k-NN queries against a persisted index.
    Query(QueryArgs),
    /// Run the repeated hold-out benchmark and write CSV reports.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Number of vectors.
    #[arg(long)]
    n: usize,

    /// Dimensionality.
    #[arg(long)]
    d: usize,

    /// Number of mixture components.
    #[arg(long)]
    clusters: usize,

    /// Per-cluster standard deviation.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,

    /// Minimum centroid separation, in units of spread.
    #[arg(long, default_value_t = 9.0)]
    separation: f64,

    /// Largest-to-smallest cluster population ratio.
    #[arg(long, default_value_t = 6.0)]
    imbalance: f64,

    /// Output vector file (.csv for CSV, packed binary otherwise).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("minpts").required(true).multiple(false)))]
struct BuildArgs {
    /// Tree preset: no-ngp, ngp, pddp, or nohis.
    #[arg(long)]
    variant: String,

    /// Target number of childless nodes.
    #[arg(long)]
    k: usize,

    /// Minimum leaf population as a percentage of the mean cluster size.
    #[arg(long, group = "minpts")]
    minpts_pct: Option<f64>,

    /// Minimum leaf population as an absolute count.
    #[arg(long, group = "minpts")]
    minpts_abs: Option<usize>,

    /// Input vector file.
    data: PathBuf,

    /// Output index file.
    index: PathBuf,
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Neighbors to retrieve per query.
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Childless-node scan budget; omit for exact search.
    #[arg(long)]
    budget: Option<usize>,

    /// Index file written by `build`.
    index: PathBuf,

    /// Vector file of queries.
    queries: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("minpts").required(true).multiple(false)))]
struct BenchArgs {
    /// Comma-separated variants out of no-ngp, ngp, pddp, nohis, seqscan.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "no-ngp,ngp,pddp,nohis,seqscan"
    )]
    variants: Vec<String>,

    /// Target number of childless nodes for tree variants.
    #[arg(long)]
    k: usize,

    /// Minimum leaf population as a percentage of the mean cluster size.
    #[arg(long, group = "minpts")]
    minpts_pct: Option<f64>,

    /// Minimum leaf population as an absolute count.
    #[arg(long, group = "minpts")]
    minpts_abs: Option<usize>,

    /// Comma-separated childless-node budgets to sweep.
    #[arg(long, value_delimiter = ',')]
    budgets: Vec<usize>,

    /// Hold-out repetitions.
    #[arg(long, default_value_t = 10)]
    reps: usize,

    /// Queries held out per repetition.
    #[arg(long, default_value_t = 20)]
    queries: usize,

    /// Neighbors retrieved per query.
    #[arg(long, default_value_t = 20)]
    knn: usize,

    /// Per-run CSV output path.
    #[arg(long, default_value = "runs.csv")]
    runs_out: PathBuf,

    /// Aggregate CSV output path.
    #[arg(long, default_value = "aggregates.csv")]
    aggregates_out: PathBuf,

    /// Input vector file.
    data: PathBuf,
}

fn minpts_rule(pct: Option<f64>, abs: Option<usize>) -> MinptsRule {
    match (pct, abs) {
        (Some(p), None) => MinptsRule::Percent(p),
        (None, Some(a)) => MinptsRule::Absolute(a),
        _ => unreachable!("clap enforces exactly one minpts flag"),
    }
}

fn preset_config(name: &str, k: usize, minpts: MinptsRule, seed: u64) -> Result<TreeConfig> {
    let mut cfg = match name {
        "no-ngp" => TreeConfig::no_ngp(k),
        "ngp" => TreeConfig::ngp(k),
        "pddp" => TreeConfig::pddp(k),
        "nohis" => TreeConfig::nohis(k),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown variant {other:?}; expected no-ngp, ngp, pddp, or nohis"
            )))
        }
    };
    cfg.minpts = minpts;
    cfg.seed = seed;
    Ok(cfg)
}

fn cmd_gen(args: GenArgs, seed: u64, quiet: bool) -> Result<()> {
    let spec = MixtureSpec {
        n: args.n,
        d: args.d,
        clusters: args.clusters,
        spread: args.spread,
        separation: args.separation,
        imbalance: args.imbalance,
        seed,
    };
    let data = generate_mixture(&spec)?;
    write_vectors_path(&args.out, &data)?;
    if !quiet {
        writeln!(
            std::io::stdout(),
            "generated {} vectors (d={}, seed={}) -> {}",
            data.nrows(),
            data.dim(),
            seed,
            args.out.display()
        )?;
    }
    Ok(())
}

fn cmd_build(args: BuildArgs, seed: u64, quiet: bool) -> Result<()> {
    let data = read_vectors_path(&args.data)?;
    let cfg = preset_config(
        &args.variant,
        args.k,
        minpts_rule(args.minpts_pct, args.minpts_abs),
        seed,
    )?;
    let started = Instant::now();
    let tree = build(data, cfg)?;
    let elapsed = started.elapsed().as_secs_f64();
    save_tree(&tree, &args.index)?;
    if !quiet {
        let stats = tree.stats();
        writeln!(
            std::io::stdout(),
            "built {} over {} rows: {} leaves, {} outliers, {} nodes in {elapsed:.3}s -> {}",
            args.variant,
            tree.data().nrows(),
            stats.leaf_count,
            stats.outlier_count,
            tree.nodes().len(),
            args.index.display()
        )?;
    }
    Ok(())
}

fn print_result(out: &mut impl Write, qi: usize, res: &SearchResult, quiet: bool) -> Result<()> {
    if !quiet {
        writeln!(
            out,
            "query {qi}: leaves_visited={} distance_computations={}",
            res.stats.leaves_visited, res.stats.distance_computations
        )?;
    }
    for (id, dist) in &res.hits {
        writeln!(out, "{id} {dist}")?;
    }
    Ok(())
}

fn cmd_query(args: QueryArgs, quiet: bool) -> Result<()> {
    let tree = load_tree(&args.index)?;
    let queries = read_vectors_path(&args.queries)?;
    let budget = args.budget.map(QueryBudget::new).transpose()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for qi in 0..queries.nrows() {
        let q = queries.row(qi);
        let res = match budget {
            Some(b) => knn_budgeted(&tree, q, args.k, b)?,
            None => knn_exact(&tree, q, args.k)?,
        };
        print_result(&mut out, qi, &res, quiet)?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs, seed: u64, threads: usize, quiet: bool) -> Result<()> {
    let data = read_vectors_path(&args.data)?;
    let minpts = minpts_rule(args.minpts_pct, args.minpts_abs);
    let variants = args
        .variants
        .iter()
        .map(|name| {
            if name == "seqscan" {
                Ok(BenchVariant::SeqScan)
            } else {
                Ok(BenchVariant::tree(
                    name.clone(),
                    preset_config(name, args.k, minpts, seed)?,
                ))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let protocol = Protocol {
        repetitions: args.reps,
        queries_per_rep: args.queries,
        knn_k: args.knn,
    };
    let report = cross_validate(&data, &variants, protocol, &args.budgets, seed, threads)?;
    atomic_write(&args.runs_out, |w| report.write_runs_csv(w))?;
    atomic_write(&args.aggregates_out, |w| report.write_aggregates_csv(w))?;
    if !quiet {
        let stdout = std::io::stdout();
        let mut out = stdout.lock();
        writeln!(out, "environment: {}", report.environment)?;
        writeln!(
            out,
            "wrote {} runs -> {} and {} aggregates -> {}",
            report.runs.len(),
            args.runs_out.display(),
            report.aggregates.len(),
            args.aggregates_out.display()
        )?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidSpec(_) | Error::InvalidConfig(_) => 2,
        Error::Internal(_) => 4,
        _ => 3,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args, cli.seed, cli.quiet),
        Command::Build(args) => cmd_build(args, cli.seed, cli.quiet),
        Command::Query(args) => cmd_query(args, cli.quiet),
        Command::Bench(args) => cmd_bench(args, cli.seed, cli.threads, cli.quiet),
    }
}

/// Parses the process arguments, runs the selected command, and returns the
/// process exit code: 0 on success, 2 for usage errors, 3 for data or
/// format errors, 4 for internal invariant violations.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        // A reader that stops consuming our output is not an error.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
