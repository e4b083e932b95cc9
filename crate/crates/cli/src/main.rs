use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use chess_core::benchmark::{run_benchmark, write_csv, BenchmarkConfig};
use chess_core::compression::{compress_tree, decompress_file, default_quantum, Quantizer};
use chess_core::dataset::{load_any, save_any, synth_manifold, synth_sequences};
use chess_core::search::{knn_search, naive_search, rho_search, Hit};
use chess_core::tree::{deserialize, lfd_depth_profile, serialize};
use chess_core::{BuildConfig, ClusterTree, Dataset, Metric, Parallelism};

/// Hierarchical metric-space index: build, search, benchmark, compress.
#[derive(Parser)]
#[command(name = "chess", version)]
struct Cli {
    /// Worker threads for build, bench and compression (1 runs sequentially).
    #[arg(long, global = true, env = "CHESS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cluster tree over a dataset and write it to disk.
    Build(BuildArgs),
    /// Range search: every indexed point within a radius of each query.
    Search(SearchArgs),
    /// k nearest indexed points to each query.
    Knn(KnnArgs),
    /// Held-out benchmark of tree search against a linear scan.
    Bench(BenchArgs),
    /// Delta-compress a dataset along the leaves of its tree.
    Compress(CompressArgs),
    /// Restore a dataset from a compressed archive.
    Decompress(DecompressArgs),
    /// Tree statistics and the LFD profile as CSV.
    Info(InfoArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TreeParams {
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    max_depth: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    min_size: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildArgs {
    /// CHESSVEC or sequence file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_metric)]
    metric: Metric,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tree: TreeParams,
}

#[derive(Args)]
struct IndexArgs {
    /// The dataset the tree was built over.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    /// CHESSVEC or sequence file of query points.
    #[arg(long)]
    queries: PathBuf,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, value_parser = parse_radius)]
    radius: f64,
    /// Answer with a linear scan instead of the tree.
    #[arg(long)]
    naive: bool,
}

#[derive(Args)]
struct KnnArgs {
    #[command(flatten)]
    index: IndexArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_metric)]
    metric: Metric,
    /// Comma-separated search radii.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_radius)]
    radii: Vec<f64>,
    /// Comma-separated tree depths; 0 is a single unsplit leaf.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
    depths: Vec<usize>,
    /// Number of points held out as queries.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    holdout: u64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    min_size: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Quantization step for dense values.
    #[arg(long, value_parser = parse_quantum)]
    quantum: Option<f64>,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    /// LFD profile CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    /// Write aligned strings instead of manifold vectors.
    #[arg(long)]
    strings: bool,
    #[arg(long, default_value_t = 100)]
    embed: usize,
    #[arg(long, default_value_t = 1)]
    intrinsic: usize,
    #[arg(long, default_value_t = 1e-5)]
    noise: f64,
    #[arg(long, default_value_t = 500)]
    length: usize,
    #[arg(long, default_value_t = 20)]
    ancestors: usize,
    #[arg(long, default_value_t = 3)]
    mutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: chess_core::ChessError| e.to_string())
}

fn parse_radius(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(r) if r >= 0.0 && r.is_finite() => Ok(r),
        _ => Err(format!("{s:?} is not a finite nonnegative number")),
    }
}

fn parse_quantum(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(q) if q > 0.0 && q.is_finite() => Ok(q),
        _ => Err(format!("{s:?} is not a finite positive number")),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load(path: &Path) -> Result<Dataset> {
    load_any(path).with_context(|| format!("reading {}", path.display()))
}

fn load_index(args: &IndexArgs) -> Result<(Dataset, ClusterTree, Dataset)> {
    let data = load(&args.input)?;
    let tree = deserialize(&args.tree, &data)
        .with_context(|| format!("reading {}", args.tree.display()))?;
    let queries = load(&args.queries)?;
    Ok((data, tree, queries))
}

fn write_hits(out: &mut dyn Write, query: usize, hits: &[Hit]) -> io::Result<()> {
    for h in hits {
        writeln!(out, "{query},{},{}", h.index, h.distance)?;
    }
    Ok(())
}

fn build(args: BuildArgs, parallelism: Parallelism) -> Result<()> {
    let data = load(&args.input)?;
    let config = BuildConfig::new(
        args.tree.max_depth as usize,
        args.tree.min_size as usize,
        args.tree.seed,
    )?;
    let tree = ClusterTree::build_with(&data, args.metric, config, parallelism)?;
    serialize(&tree, &data, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "n={} depth={} leaves={} mean_leaf_radius={} median_leaf_radius={} build_comparisons={}",
        tree.len(),
        tree.depth(),
        tree.metric_entropy(),
        tree.mean_leaf_radius(),
        tree.median_leaf_radius(),
        tree.build_comparisons()
    );
    Ok(())
}

fn search(args: SearchArgs) -> Result<()> {
    let (data, tree, queries) = load_index(&args.index)?;
    let mut out = output(args.index.out.as_deref())?;
    writeln!(out, "query_id,point_index,distance")?;
    let (mut comparisons, mut fraction) = (0u64, 0.0);
    for (qid, q) in queries.points().enumerate() {
        let report = if args.naive {
            naive_search(&data, tree.metric(), q, args.radius)?
        } else {
            rho_search(&tree, &data, q, args.radius)?
        };
        comparisons += report.comparisons;
        fraction += report.fraction_searched;
        write_hits(&mut out, qid, &report.hits)?;
    }
    out.flush()?;
    let nq = queries.len().max(1);
    eprintln!(
        "queries={} comparisons={comparisons} mean_fraction_searched={}",
        queries.len(),
        fraction / nq as f64
    );
    Ok(())
}

fn knn(args: KnnArgs) -> Result<()> {
    let (data, tree, queries) = load_index(&args.index)?;
    let mut out = output(args.index.out.as_deref())?;
    writeln!(out, "query_id,point_index,distance")?;
    let (mut comparisons, mut searches) = (0u64, 0usize);
    for (qid, q) in queries.points().enumerate() {
        let report = knn_search(&tree, &data, q, args.k as usize)?;
        comparisons += report.comparisons;
        searches += report.range_searches;
        write_hits(&mut out, qid, &report.hits)?;
    }
    out.flush()?;
    eprintln!(
        "queries={} comparisons={comparisons} range_searches={searches}",
        queries.len()
    );
    Ok(())
}

fn bench(args: BenchArgs, parallelism: Parallelism) -> Result<()> {
    let data = load(&args.input)?;
    let config = BenchmarkConfig {
        radii: args.radii,
        depths: args.depths,
        num_queries: args.holdout as usize,
        min_size: args.min_size as usize,
        seed: args.seed,
        parallelism,
    };
    let rows = run_benchmark(&data, args.metric, &config)?;
    let mut out = output(args.out.as_deref())?;
    write_csv(&rows, &mut out)?;
    out.flush()?;
    for row in &rows {
        eprintln!(
            "depth={} radius={} speedup={:.2} wall_speedup={:.2} fraction={:.4} fp={} fn={}",
            row.depth,
            row.radius,
            row.speedup_mean,
            row.wall_speedup_mean,
            row.fraction_mean,
            row.false_pos,
            row.false_neg
        );
    }
    Ok(())
}

fn compress(args: CompressArgs, parallelism: Parallelism) -> Result<()> {
    let data = load(&args.input)?;
    let tree = deserialize(&args.tree, &data)
        .with_context(|| format!("reading {}", args.tree.display()))?;
    let quantizer = Quantizer::new(args.quantum.unwrap_or_else(default_quantum))?;
    let bytes = compress_tree(&tree, &data, &quantizer, parallelism)?;
    std::fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    let raw = data.to_bytes().len();
    eprintln!(
        "raw_bytes={raw} compressed_bytes={} ratio={:.4}",
        bytes.len(),
        bytes.len() as f64 / raw as f64
    );
    Ok(())
}

fn decompress(args: DecompressArgs) -> Result<()> {
    let archive = decompress_file(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    save_any(&archive.dataset, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "n={} dim={} kind={}",
        archive.dataset.len(),
        archive.dataset.dim(),
        archive.dataset.kind().name()
    );
    Ok(())
}

fn info(args: InfoArgs) -> Result<()> {
    let data = load(&args.input)?;
    let tree = deserialize(&args.tree, &data)
        .with_context(|| format!("reading {}", args.tree.display()))?;
    let config = tree.config();
    eprintln!(
        "n={} metric={} max_depth={} min_size={} seed={} depth={} nodes={} leaves={} mean_leaf_radius={} median_leaf_radius={} root_radius={}",
        tree.len(),
        tree.metric(),
        config.max_depth,
        config.min_size,
        config.seed,
        tree.depth(),
        tree.nodes().len(),
        tree.metric_entropy(),
        tree.mean_leaf_radius(),
        tree.median_leaf_radius(),
        tree.root().radius
    );
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "depth,decile,mean_lfd,clusters")?;
    for row in lfd_depth_profile(&tree) {
        writeln!(
            out,
            "{},{},{},{}",
            row.depth, row.decile, row.mean_lfd, row.clusters
        )?;
    }
    out.flush()?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let data = if args.strings {
        synth_sequences(
            args.n,
            args.length,
            args.ancestors,
            args.mutations,
            args.seed,
        )?
    } else {
        synth_manifold(args.n, args.embed, args.intrinsic, args.noise, args.seed)?
    };
    save_any(&data, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "n={} dim={} kind={}",
        data.len(),
        data.dim(),
        data.kind().name()
    );
    Ok(())
}

fn run(command: Command, parallelism: Parallelism) -> Result<()> {
    match command {
        Command::Build(a) => build(a, parallelism),
        Command::Search(a) => search(a),
        Command::Knn(a) => knn(a),
        Command::Bench(a) => bench(a, parallelism),
        Command::Compress(a) => compress(a, parallelism),
        Command::Decompress(a) => decompress(a),
        Command::Info(a) => info(a),
        Command::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        Some(t) => t,
        None => 0,
    };
    let parallelism = if threads == 1 {
        Parallelism::Sequential
    } else {
        Parallelism::Rayon
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command, parallelism)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
