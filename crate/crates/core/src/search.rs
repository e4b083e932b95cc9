//! Range (ρ-nearest-neighbor) and k-nearest-neighbor search.
//!
//! Tree search descends from the root and explores a child only when the
//! query lies within `r + child.radius` of the child's center. Under a true
//! metric that test never discards a hit, so results match [`naive_search`]
//! exactly; under cosine distance hits may be missed but never invented.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::dataset::Dataset;
use crate::error::{ChessError, Result};
use crate::metric::{ComparisonCounter, Metric, PointRef};
use crate::tree::{ClusterTree, NodeId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub distance: f64,
}

impl Hit {
    fn order(&self, other: &Hit) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

/// Hits of one query plus the work it took.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchReport {
    /// Sorted by distance, then index.
    pub hits: Vec<Hit>,
    pub comparisons: u64,
    pub leaves_visited: usize,
    /// Points scanned exhaustively, divided by the number of indexed points.
    pub fraction_searched: f64,
    /// Seconds.
    pub wall_time: f64,
}

impl SearchReport {
    pub fn indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = self.hits.iter().map(|h| h.index).collect();
        idx.sort_unstable();
        idx
    }
}

fn check_query(dataset: &Dataset, metric: Metric, q: PointRef<'_>, radius: f64) -> Result<()> {
    if radius.is_nan() || radius < 0.0 {
        return Err(ChessError::precondition(format!(
            "search radius must be nonnegative, got {radius}"
        )));
    }
    dataset.check_point(q)?;
    metric.check(q, dataset.point(0))
}

/// Tree search for every indexed point within `radius` of `q`.
pub fn rho_search(
    tree: &ClusterTree,
    dataset: &Dataset,
    q: PointRef<'_>,
    radius: f64,
) -> Result<SearchReport> {
    let metric = tree.metric();
    check_query(dataset, metric, q, radius)?;
    if dataset.len() != tree.len() {
        return Err(ChessError::precondition(format!(
            "tree indexes {} points but dataset holds {}",
            tree.len(),
            dataset.len()
        )));
    }
    let start = Instant::now();
    let mut counter = ComparisonCounter::new();
    let mut hits = Vec::new();
    let mut leaves_visited = 0;
    let mut scanned = 0usize;

    let mut scan = |id: NodeId, center_distance: Option<f64>, counter: &mut ComparisonCounter| {
        let node = tree.node(id);
        leaves_visited += 1;
        scanned += node.members.len();
        for &m in &node.members {
            let d = match center_distance {
                Some(d) if m == node.center => d,
                _ => counter.eval(metric, q, dataset.point(m)),
            };
            if d <= radius {
                hits.push(Hit {
                    index: m,
                    distance: d,
                });
            }
        }
    };

    if tree.root().is_leaf() {
        scan(0, None, &mut counter);
    } else {
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            let (l, r) = tree
                .node(id)
                .children
                .expect("only internal nodes are stacked");
            // Right is stacked first so the left subtree is explored first.
            let mut next = Vec::with_capacity(2);
            for child in [l, r] {
                let node = tree.node(child);
                let d = counter.eval(metric, q, dataset.point(node.center));
                if d <= radius + node.radius {
                    if node.is_leaf() {
                        scan(child, Some(d), &mut counter);
                    } else {
                        next.push(child);
                    }
                }
            }
            stack.extend(next.into_iter().rev());
        }
    }

    hits.sort_by(Hit::order);
    Ok(SearchReport {
        hits,
        comparisons: counter.count(),
        leaves_visited,
        fraction_searched: scanned as f64 / tree.len() as f64,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Linear scan over every point; exactly `n` comparisons.
pub fn naive_search(
    dataset: &Dataset,
    metric: Metric,
    q: PointRef<'_>,
    radius: f64,
) -> Result<SearchReport> {
    check_query(dataset, metric, q, radius)?;
    let start = Instant::now();
    let mut counter = ComparisonCounter::new();
    let mut hits: Vec<Hit> = dataset
        .points()
        .enumerate()
        .filter_map(|(index, p)| {
            let distance = counter.eval(metric, q, p);
            (distance <= radius).then_some(Hit { index, distance })
        })
        .collect();
    hits.sort_by(Hit::order);
    Ok(SearchReport {
        hits,
        comparisons: counter.count(),
        leaves_visited: 1,
        fraction_searched: 1.0,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Result of a k-nearest-neighbor query.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnReport {
    /// The `k` nearest points, sorted by distance then index.
    pub hits: Vec<Hit>,
    pub comparisons: u64,
    /// Number of tree range searches issued.
    pub range_searches: usize,
    /// Radius of the ball the answer was drawn from.
    pub final_radius: f64,
    /// Whether the query had to fall back to a linear scan.
    pub fell_back: bool,
    pub wall_time: f64,
}

/// Keeps the `k` smallest hits under (distance, index) order.
struct BoundedSelection {
    k: usize,
    heap: BinaryHeap<HeapHit>,
}

struct HeapHit(Hit);

impl PartialEq for HeapHit {
    fn eq(&self, other: &Self) -> bool {
        self.0.order(&other.0) == Ordering::Equal
    }
}
impl Eq for HeapHit {}
impl PartialOrd for HeapHit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapHit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.order(&other.0)
    }
}

impl BoundedSelection {
    fn new(k: usize) -> Self {
        BoundedSelection {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, hit: Hit) {
        if self.heap.len() < self.k {
            self.heap.push(HeapHit(hit));
        } else if let Some(worst) = self.heap.peek() {
            if hit.order(&worst.0) == Ordering::Less {
                self.heap.pop();
                self.heap.push(HeapHit(hit));
            }
        }
    }

    fn into_sorted(self) -> Vec<Hit> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|h| h.0)
            .collect()
    }
}

/// The `k` nearest indexed points to `q`.
///
/// Starts from a range search at the median leaf radius. Too many hits (with
/// more than one leaf scanned) halves the radius until the ball holds at most
/// `k` points and then steps back to the last radius holding more; too few
/// doubles it while it does not exceed the root radius. If the ball still
/// holds fewer than `k` points, one linear scan answers the query.
pub fn knn_search(
    tree: &ClusterTree,
    dataset: &Dataset,
    q: PointRef<'_>,
    k: usize,
) -> Result<KnnReport> {
    let n = tree.len();
    if k == 0 || k > n {
        return Err(ChessError::precondition(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    let start = Instant::now();
    let root_radius = tree.root().radius;
    let mut rho = tree.median_leaf_radius();
    if rho == 0.0 {
        rho = tree
            .leaf_radii()
            .into_iter()
            .filter(|&r| r > 0.0)
            .min_by(f64::total_cmp)
            .unwrap_or(root_radius);
    }

    let mut comparisons = 0;
    let mut range_searches = 0;
    let mut search = |rho: f64| -> Result<SearchReport> {
        let report = rho_search(tree, dataset, q, rho)?;
        comparisons += report.comparisons;
        range_searches += 1;
        Ok(report)
    };

    let mut report = search(rho)?;
    if rho > 0.0 {
        // Bound on halvings or doublings before rho under- or overflows.
        let cap = (root_radius.max(rho).log2() - f64::MIN_POSITIVE.log2()).ceil() as usize + 64;
        if report.hits.len() > k && report.leaves_visited > 1 {
            for _ in 0..cap {
                let smaller = search(rho / 2.0)?;
                if smaller.hits.len() <= k {
                    // Doubling back lands on the radius just searched.
                    break;
                }
                rho /= 2.0;
                report = smaller;
                if rho == 0.0 {
                    break;
                }
            }
        } else if report.hits.len() < k && rho <= root_radius {
            for _ in 0..cap {
                if report.hits.len() >= k {
                    break;
                }
                rho *= 2.0;
                report = search(rho)?;
            }
        }
    }

    let mut fell_back = false;
    if report.hits.len() < k {
        report = naive_search(dataset, tree.metric(), q, f64::INFINITY)?;
        comparisons += report.comparisons;
        rho = f64::INFINITY;
        fell_back = true;
    }

    let mut selection = BoundedSelection::new(k);
    for hit in report.hits {
        selection.offer(hit);
    }
    Ok(KnnReport {
        hits: selection.into_sorted(),
        comparisons,
        range_searches,
        final_radius: rho,
        fell_back,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_manifold, Dataset};
    use crate::metric::Point;
    use crate::tree::BuildConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)])
            .collect();
        Dataset::from_rows(&rows).unwrap()
    }

    fn brute_knn(ds: &Dataset, q: PointRef<'_>, k: usize) -> Vec<Hit> {
        let mut all: Vec<Hit> = ds
            .points()
            .enumerate()
            .map(|(index, p)| Hit {
                index,
                distance: Metric::Euclidean.distance(q, p).unwrap(),
            })
            .collect();
        all.sort_by(Hit::order);
        all.truncate(k);
        all
    }

    #[test]
    fn zero_radius_finds_stored_point() {
        let ds = plane(500, 1);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let report = rho_search(&tree, &ds, ds.point(42), 0.0).unwrap();
        assert_eq!(report.indices(), vec![42]);
        assert_eq!(report.hits[0].distance, 0.0);
    }

    #[test]
    fn covering_radius_returns_everything() {
        let ds = plane(300, 2);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let q = [250.0, -40.0];
        let q = PointRef::Dense(&q);
        let r = tree.root().radius
            + Metric::Euclidean
                .distance(q, ds.point(tree.root().center))
                .unwrap();
        let report = rho_search(&tree, &ds, q, r).unwrap();
        assert_eq!(report.hits.len(), 300);
    }

    #[test]
    fn naive_makes_n_comparisons() {
        let ds = plane(123, 3);
        let q = [5.0, 5.0];
        let report = naive_search(&ds, Metric::Euclidean, PointRef::Dense(&q), 10.0).unwrap();
        assert_eq!(report.comparisons, 123);
        let empty =
            naive_search(&ds, Metric::Euclidean, PointRef::Dense(&[-1.0, -1.0]), 0.0).unwrap();
        assert!(empty.hits.is_empty());
    }

    #[test]
    fn naive_is_monotone_in_radius() {
        let ds = plane(400, 4);
        let q = PointRef::Dense(&[50.0, 50.0]);
        let small = naive_search(&ds, Metric::Euclidean, q, 5.0)
            .unwrap()
            .indices();
        let large = naive_search(&ds, Metric::Euclidean, q, 15.0)
            .unwrap()
            .indices();
        assert!(small.iter().all(|i| large.binary_search(i).is_ok()));
    }

    #[test]
    fn search_errors() {
        let ds = plane(50, 5);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        assert!(rho_search(&tree, &ds, ds.point(0), -1.0).is_err());
        assert!(rho_search(&tree, &ds, ds.point(0), f64::NAN).is_err());
        assert!(rho_search(&tree, &ds, PointRef::Dense(&[1.0]), 1.0).is_err());
        assert!(knn_search(&tree, &ds, ds.point(0), 0).is_err());
        assert!(knn_search(&tree, &ds, ds.point(0), 51).is_err());
    }

    #[test]
    fn knn_all_points_sorted() {
        let ds = plane(200, 6);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let q = PointRef::Dense(&[10.0, 90.0]);
        let report = knn_search(&tree, &ds, q, 200).unwrap();
        assert_eq!(report.hits, brute_knn(&ds, q, 200));
    }

    #[test]
    fn knn_self_is_nearest() {
        let ds = plane(1000, 7);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let report = knn_search(&tree, &ds, ds.point(17), 1).unwrap();
        assert_eq!(
            report.hits,
            vec![Hit {
                index: 17,
                distance: 0.0
            }]
        );
    }

    #[test]
    fn knn_matches_brute_force_on_plane() {
        let ds = plane(5000, 8);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        for _ in 0..50 {
            let q = Point::Dense(vec![
                rng.random_range(0.0..100.0),
                rng.random_range(0.0..100.0),
            ]);
            let report = knn_search(&tree, &ds, q.as_ref(), 10).unwrap();
            assert_eq!(report.hits, brute_knn(&ds, q.as_ref(), 10));
        }
    }

    #[test]
    fn knn_tie_breaks_by_index() {
        // Four points at distance 1 from the query; k = 2 keeps the two lowest indices.
        let ds = Dataset::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
            vec![5.0, 5.0],
        ])
        .unwrap();
        let tree =
            ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::new(5, 1, 0).unwrap()).unwrap();
        let report = knn_search(&tree, &ds, PointRef::Dense(&[0.0, 0.0]), 2).unwrap();
        let idx: Vec<usize> = report.hits.iter().map(|h| h.index).collect();
        assert_eq!(idx, vec![0, 1]);
    }

    #[test]
    fn knn_on_duplicates_falls_back_cleanly() {
        let ds = Dataset::from_dense(2, vec![3.0; 40]).unwrap();
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let report = knn_search(&tree, &ds, PointRef::Dense(&[0.0, 0.0]), 5).unwrap();
        assert_eq!(report.hits.len(), 5);
        assert!(report.fell_back);
        let idx: Vec<usize> = report.hits.iter().map(|h| h.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn tree_search_prunes_on_a_manifold() {
        let ds = synth_manifold(4000, 30, 1, 0.0, 3).unwrap();
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::new(30, 10, 1).unwrap())
            .unwrap();
        let r = tree.root().radius * 0.01;
        let report = rho_search(&tree, &ds, ds.point(100), r).unwrap();
        let naive = naive_search(&ds, Metric::Euclidean, ds.point(100), r).unwrap();
        assert_eq!(report.hits, naive.hits);
        assert!(report.comparisons < naive.comparisons / 5);
    }
}
