//! Held-out query benchmarks comparing tree search against a linear scan.
//!
//! A fixed number of points is held out of the dataset, one tree is built per
//! requested depth over the rest, and every held-out point is searched at
//! every radius with both [`rho_search`] and [`naive_search`]. Rows aggregate
//! per (depth, radius); standard deviations are population deviations.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{ChessError, Result};
use crate::metric::{Metric, Point};
use crate::parallel::Parallelism;
use crate::search::{naive_search, rho_search, SearchReport};
use crate::tree::{BuildConfig, ClusterTree};

pub const CSV_HEADER: &str = "depth,radius,metric,comparisons_mean,comparisons_std,time_mean_s,time_std_s,fraction_mean,fraction_std,speedup_mean,output_mean,output_std,false_pos,false_neg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub depth: usize,
    pub radius: f64,
    pub metric: String,
    pub comparisons_mean: f64,
    pub comparisons_std: f64,
    pub time_mean_s: f64,
    pub time_std_s: f64,
    pub fraction_mean: f64,
    pub fraction_std: f64,
    /// Mean of naive comparisons over tree comparisons, per query.
    pub speedup_mean: f64,
    pub output_mean: f64,
    pub output_std: f64,
    pub false_pos: u64,
    pub false_neg: u64,
    /// Mean of naive wall time over tree wall time, per query. Not written to
    /// CSV since it depends on the machine.
    #[serde(skip)]
    pub wall_speedup_mean: f64,
}

impl BenchmarkRow {
    /// The row with every wall-clock column zeroed.
    pub fn without_timing(&self) -> BenchmarkRow {
        BenchmarkRow {
            time_mean_s: 0.0,
            time_std_s: 0.0,
            wall_speedup_mean: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub radii: Vec<f64>,
    /// Tree depths to sweep. Depth 0 means a single leaf (no pruning).
    pub depths: Vec<usize>,
    pub num_queries: usize,
    pub min_size: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            radii: Vec::new(),
            depths: vec![10, 20, 30, 40, 50],
            num_queries: 50,
            min_size: 10,
            seed: 0,
            parallelism: Parallelism::default(),
        }
    }
}

/// Splits `num_queries` uniformly chosen points off `dataset`. Returns the
/// remaining points (original order) and the held-out points (ascending
/// original index).
pub fn hold_out(dataset: &Dataset, num_queries: usize, seed: u64) -> Result<(Dataset, Vec<Point>)> {
    let n = dataset.len();
    if num_queries >= n {
        return Err(ChessError::precondition(format!(
            "cannot hold out {num_queries} of {n} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let held: BTreeSet<usize> = sample(&mut rng, n, num_queries).into_iter().collect();
    let kept: Vec<usize> = (0..n).filter(|i| !held.contains(i)).collect();
    let queries = held.iter().map(|&i| dataset.point(i).to_owned()).collect();
    Ok((dataset.subset(&kept), queries))
}

/// Per-query measurements behind one row.
struct QueryOutcome {
    tree: SearchReport,
    naive: SearchReport,
    false_pos: u64,
    false_neg: u64,
}

fn set_differences(tree: &SearchReport, naive: &SearchReport) -> (u64, u64) {
    let t = tree.indices();
    let n = naive.indices();
    let fp = t.iter().filter(|i| n.binary_search(i).is_err()).count() as u64;
    let fneg = n.iter().filter(|i| t.binary_search(i).is_err()).count() as u64;
    (fp, fneg)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate(depth: usize, radius: f64, metric: Metric, outcomes: &[QueryOutcome]) -> BenchmarkRow {
    let (comparisons_mean, comparisons_std) =
        mean_std(outcomes.iter().map(|o| o.tree.comparisons as f64));
    let (time_mean_s, time_std_s) = mean_std(outcomes.iter().map(|o| o.tree.wall_time));
    let (fraction_mean, fraction_std) = mean_std(outcomes.iter().map(|o| o.tree.fraction_searched));
    let (output_mean, output_std) = mean_std(outcomes.iter().map(|o| o.naive.hits.len() as f64));
    let (speedup_mean, _) = mean_std(
        outcomes
            .iter()
            .map(|o| o.naive.comparisons as f64 / o.tree.comparisons.max(1) as f64),
    );
    let (wall_speedup_mean, _) = mean_std(
        outcomes
            .iter()
            .map(|o| o.naive.wall_time / o.tree.wall_time.max(f64::MIN_POSITIVE)),
    );
    BenchmarkRow {
        depth,
        radius,
        metric: metric.name().to_string(),
        comparisons_mean,
        comparisons_std,
        time_mean_s,
        time_std_s,
        fraction_mean,
        fraction_std,
        speedup_mean,
        output_mean,
        output_std,
        false_pos: outcomes.iter().map(|o| o.false_pos).sum(),
        false_neg: outcomes.iter().map(|o| o.false_neg).sum(),
        wall_speedup_mean,
    }
}

/// Runs the held-out benchmark protocol. Rows are ordered by depth, then
/// radius, in the order given.
pub fn run_benchmark(
    dataset: &Dataset,
    metric: Metric,
    config: &BenchmarkConfig,
) -> Result<Vec<BenchmarkRow>> {
    if config.radii.iter().any(|r| r.is_nan() || *r < 0.0) {
        return Err(ChessError::precondition("radii must be nonnegative"));
    }
    if config.num_queries == 0 {
        return Err(ChessError::precondition("need at least one query"));
    }
    let (index, queries) = hold_out(dataset, config.num_queries, config.seed)?;
    for q in &queries {
        metric.check(q.as_ref(), index.point(0))?;
    }
    let mut rows = Vec::with_capacity(config.depths.len() * config.radii.len());
    for &depth in &config.depths {
        let build = BuildConfig {
            max_depth: depth,
            min_size: config.min_size,
            seed: config.seed,
        };
        let tree = ClusterTree::build_unchecked(&index, metric, build, config.parallelism)?;
        for &radius in &config.radii {
            let outcomes: Vec<QueryOutcome> = config
                .parallelism
                .map(&queries, |q| -> Result<QueryOutcome> {
                    let tree_report = rho_search(&tree, &index, q.as_ref(), radius)?;
                    let naive = naive_search(&index, metric, q.as_ref(), radius)?;
                    let (false_pos, false_neg) = set_differences(&tree_report, &naive);
                    Ok(QueryOutcome {
                        tree: tree_report,
                        naive,
                        false_pos,
                        false_neg,
                    })
                })
                .into_iter()
                .collect::<Result<_>>()?;
            rows.push(aggregate(depth, radius, metric, &outcomes));
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactnessReport {
    pub false_pos: u64,
    pub false_neg: u64,
    /// False negatives over total naive hits (0 when there are none).
    pub false_neg_rate: f64,
    pub naive_hits: u64,
}

/// Compares tree search with the linear scan for every query and radius.
pub fn verify_exactness(
    tree: &ClusterTree,
    dataset: &Dataset,
    queries: &[Point],
    radii: &[f64],
) -> Result<ExactnessReport> {
    let mut report = ExactnessReport {
        false_pos: 0,
        false_neg: 0,
        false_neg_rate: 0.0,
        naive_hits: 0,
    };
    for q in queries {
        for &r in radii {
            let t = rho_search(tree, dataset, q.as_ref(), r)?;
            let n = naive_search(dataset, tree.metric(), q.as_ref(), r)?;
            let (fp, fneg) = set_differences(&t, &n);
            report.false_pos += fp;
            report.false_neg += fneg;
            report.naive_hits += n.hits.len() as u64;
        }
    }
    if report.naive_hits > 0 {
        report.false_neg_rate = report.false_neg as f64 / report.naive_hits as f64;
    }
    Ok(report)
}

pub fn write_csv<W: Write>(rows: &[BenchmarkRow], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<BenchmarkRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(ChessError::format(0, "unexpected benchmark CSV header"));
    }
    r.deserialize()
        .map(|row| row.map_err(ChessError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_manifold;

    fn corpus() -> Dataset {
        synth_manifold(1500, 20, 1, 0.001, 21).unwrap()
    }

    fn config(radius: f64) -> BenchmarkConfig {
        BenchmarkConfig {
            radii: vec![radius],
            depths: vec![0, 5, 20],
            num_queries: 20,
            seed: 3,
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn hold_out_splits_cleanly() {
        let ds = corpus();
        let (rest, queries) = hold_out(&ds, 50, 1).unwrap();
        assert_eq!(rest.len() + queries.len(), ds.len());
        assert!(hold_out(&ds, ds.len(), 1).is_err());
    }

    #[test]
    fn depth_zero_scans_everything() {
        let ds = corpus();
        let rows = run_benchmark(&ds, Metric::Euclidean, &config(0.5)).unwrap();
        let flat = &rows[0];
        assert_eq!(flat.depth, 0);
        assert_eq!(flat.fraction_mean, 1.0);
        assert_eq!(flat.speedup_mean, 1.0);
        assert!(rows.iter().all(|r| r.false_pos == 0 && r.false_neg == 0));
        assert!(rows[2].speedup_mean > rows[0].speedup_mean);
    }

    #[test]
    fn csv_round_trip_and_header() {
        let ds = corpus();
        let rows = run_benchmark(&ds, Metric::Euclidean, &config(0.25)).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert!(!text.contains('\r'));
        let back = read_csv(buf.as_slice()).unwrap();
        let expect: Vec<BenchmarkRow> = rows
            .iter()
            .map(|r| BenchmarkRow {
                wall_speedup_mean: 0.0,
                ..r.clone()
            })
            .collect();
        assert_eq!(back, expect);
    }

    #[test]
    fn sequential_and_parallel_rows_agree() {
        let ds = corpus();
        let mut cfg = config(0.3);
        cfg.parallelism = Parallelism::Sequential;
        let a = run_benchmark(&ds, Metric::Euclidean, &cfg).unwrap();
        cfg.parallelism = Parallelism::Rayon;
        let b = run_benchmark(&ds, Metric::Euclidean, &cfg).unwrap();
        let strip = |rows: Vec<BenchmarkRow>| -> Vec<BenchmarkRow> {
            rows.iter().map(BenchmarkRow::without_timing).collect()
        };
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn rejects_bad_parameters() {
        let ds = corpus();
        let mut cfg = config(-1.0);
        assert!(run_benchmark(&ds, Metric::Euclidean, &cfg).is_err());
        cfg.radii = vec![1.0];
        cfg.num_queries = ds.len();
        assert!(run_benchmark(&ds, Metric::Euclidean, &cfg).is_err());
    }

    #[test]
    fn exactness_on_a_small_corpus() {
        let ds = corpus();
        let (index, queries) = hold_out(&ds, 10, 2).unwrap();
        let tree = ClusterTree::build(&index, Metric::Euclidean, BuildConfig::default()).unwrap();
        let r = tree.root().radius;
        let report = verify_exactness(&tree, &index, &queries, &[0.0, r * 0.01, r * 0.1]).unwrap();
        assert_eq!((report.false_pos, report.false_neg), (0, 0));
        assert_eq!(report.false_neg_rate, 0.0);
        assert!(report.naive_hits > 0);
    }
}
