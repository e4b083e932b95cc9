use super::{ClusterTree, NodeId};
use crate::dataset::Dataset;

/// Local fractal dimension from member-to-center distances:
/// `log2(|B(c, r)| / |B(c, r/2)|)`, counting members only.
///
/// Zero for a singleton or a zero-radius cluster.
pub fn lfd_from_distances(distances: &[f64], radius: f64) -> f64 {
    if radius == 0.0 || distances.len() <= 1 {
        return 0.0;
    }
    let half = radius / 2.0;
    let inner = distances.iter().filter(|&&d| d <= half).count().max(1);
    (distances.len() as f64 / inner as f64).log2()
}

/// Recomputes the local fractal dimension of `node` from scratch.
pub fn local_fractal_dimension(tree: &ClusterTree, node: NodeId, dataset: &Dataset) -> f64 {
    let n = tree.node(node);
    let center = dataset.point(n.center);
    let distances: Vec<f64> = tree
        .members(node)
        .into_iter()
        .map(|m| tree.metric().eval(center, dataset.point(m)))
        .collect();
    let radius = distances.iter().copied().fold(0.0, f64::max);
    lfd_from_distances(&distances, radius)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LfdProfileRow {
    pub depth: usize,
    /// 1 through 10, ascending LFD.
    pub decile: usize,
    pub mean_lfd: f64,
    pub clusters: usize,
}

/// Mean LFD per (depth, decile). Clusters at each depth are ranked by LFD and
/// the cluster of rank `i` among `m` falls into decile `⌊10 i / m⌋ + 1`;
/// empty deciles are omitted.
pub fn lfd_depth_profile(tree: &ClusterTree) -> Vec<LfdProfileRow> {
    let mut by_depth: Vec<Vec<f64>> = vec![Vec::new(); tree.depth() + 1];
    for node in tree.nodes() {
        by_depth[node.depth].push(node.lfd);
    }
    let mut rows = Vec::new();
    for (depth, mut values) in by_depth.into_iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        values.sort_by(f64::total_cmp);
        let m = values.len();
        let mut sums = [0.0; 10];
        let mut counts = [0usize; 10];
        for (rank, v) in values.iter().enumerate() {
            let bucket = rank * 10 / m;
            sums[bucket] += v;
            counts[bucket] += 1;
        }
        for bucket in 0..10 {
            if counts[bucket] > 0 {
                rows.push(LfdProfileRow {
                    depth,
                    decile: bucket + 1,
                    mean_lfd: sums[bucket] / counts[bucket] as f64,
                    clusters: counts[bucket],
                });
            }
        }
    }
    rows
}
