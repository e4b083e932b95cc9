//! The binary divisive cluster hierarchy.
//!
//! Every cluster is centered on a real data point and carries its exact
//! radius (maximum member distance to the center), its cardinality and an
//! estimate of its local fractal dimension. A cluster is split by sampling
//! `⌈√m⌉` of its `m` members, taking the two samples furthest apart as poles
//! and sending every member to the nearer pole (ties go left). Recursion stops
//! at `max_depth`, at `min_size` members, or when all members coincide.
//!
//! Randomness is drawn from a ChaCha8 stream seeded per node from the build
//! seed and the node's path from the root, so a build is reproducible
//! regardless of how subtrees are scheduled across threads.

mod insert;
pub mod io;
mod lfd;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{ChessError, Result};
use crate::metric::{ComparisonCounter, Metric};
use crate::parallel::Parallelism;

pub use insert::DEFAULT_SPLIT_FACTOR;
pub use io::{
    decode_tree, deserialize, encode_tree, serialize, TreeHeader, CHESSTREE_MAGIC,
    CHESSTREE_VERSION,
};
pub use lfd::{lfd_depth_profile, lfd_from_distances, local_fractal_dimension, LfdProfileRow};

/// Subtrees smaller than this are grown on the calling thread.
const PARALLEL_SPLIT_THRESHOLD: usize = 2048;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuildConfig {
    pub max_depth: usize,
    pub min_size: usize,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            max_depth: 50,
            min_size: 10,
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn new(max_depth: usize, min_size: usize, seed: u64) -> Result<Self> {
        let config = BuildConfig {
            max_depth,
            min_size,
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(ChessError::precondition("max_depth must be positive"));
        }
        if self.min_size == 0 {
            return Err(ChessError::precondition("min_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterNode {
    /// Index of the center point in the dataset. Always one of the members.
    pub center: usize,
    pub radius: f64,
    pub cardinality: usize,
    pub lfd: f64,
    pub depth: usize,
    pub children: Option<(NodeId, NodeId)>,
    /// Member indices, ascending. Empty for internal nodes.
    pub members: Vec<usize>,
}

impl ClusterNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// A built hierarchy. Nodes live in an arena; the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterTree {
    nodes: Vec<ClusterNode>,
    metric: Metric,
    config: BuildConfig,
    n_points: usize,
    build_comparisons: u64,
}

impl ClusterTree {
    /// Builds a tree with the default parallelism.
    pub fn build(dataset: &Dataset, metric: Metric, config: BuildConfig) -> Result<Self> {
        Self::build_with(dataset, metric, config, Parallelism::default())
    }

    pub fn build_with(
        dataset: &Dataset,
        metric: Metric,
        config: BuildConfig,
        parallelism: Parallelism,
    ) -> Result<Self> {
        config.validate()?;
        Self::build_unchecked(dataset, metric, config, parallelism)
    }

    /// Like [`ClusterTree::build_with`] but also accepts `max_depth == 0`,
    /// which yields a single leaf holding every point. Used as the no-pruning
    /// baseline by the benchmark harness.
    pub(crate) fn build_unchecked(
        dataset: &Dataset,
        metric: Metric,
        config: BuildConfig,
        parallelism: Parallelism,
    ) -> Result<Self> {
        if config.min_size == 0 {
            return Err(ChessError::precondition("min_size must be positive"));
        }
        if dataset.is_empty() {
            return Err(ChessError::precondition(
                "cannot build over an empty dataset",
            ));
        }
        dataset.check_metric(metric)?;

        let n = dataset.len();
        let members: Vec<usize> = (0..n).collect();
        let mut counter = ComparisonCounter::new();
        let mut rng = node_rng(config.seed, ROOT_KEY);
        let center = approximate_median(&members, dataset, metric, &mut counter, &mut rng);
        let distances = members
            .iter()
            .map(|&i| {
                if i == center {
                    0.0
                } else {
                    counter.eval(metric, dataset.point(center), dataset.point(i))
                }
            })
            .collect();

        let builder = Builder {
            dataset,
            metric,
            config,
            parallelism,
        };
        let (root, sub_counter) = builder.grow(members, center, distances, 0, ROOT_KEY);
        counter.absorb(sub_counter);

        let mut nodes = Vec::new();
        flatten(root, &mut nodes);
        Ok(ClusterTree {
            nodes,
            metric,
            config,
            n_points: n,
            build_comparisons: counter.count(),
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn config(&self) -> BuildConfig {
        self.config
    }

    /// Number of indexed points.
    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    /// Distance comparisons spent building the tree. Zero for trees read from
    /// disk.
    pub fn build_comparisons(&self) -> u64 {
        self.build_comparisons
    }

    pub fn root(&self) -> &ClusterNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &ClusterNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[ClusterNode] {
        &self.nodes
    }

    /// Node ids in pre-order (node, left subtree, right subtree).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let Some((l, r)) = self.nodes[id].children {
                stack.push(r);
                stack.push(l);
            }
        }
        order
    }

    /// Leaf ids in pre-order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.preorder()
            .into_iter()
            .filter(|&id| self.nodes[id].is_leaf())
            .collect()
    }

    /// All point indices under `id`, ascending.
    pub fn members(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[id].cardinality);
        let mut stack = vec![id];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => out.extend_from_slice(&node.members),
            }
        }
        out.sort_unstable();
        out
    }

    /// Number of leaf clusters.
    pub fn metric_entropy(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Deepest node depth.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaf_radii(&self) -> Vec<f64> {
        self.leaves()
            .into_iter()
            .map(|id| self.nodes[id].radius)
            .collect()
    }

    pub fn mean_leaf_radius(&self) -> f64 {
        let radii = self.leaf_radii();
        radii.iter().sum::<f64>() / radii.len() as f64
    }

    /// Median leaf radius (lower median for an even leaf count).
    pub fn median_leaf_radius(&self) -> f64 {
        let mut radii = self.leaf_radii();
        radii.sort_by(f64::total_cmp);
        radii[(radii.len() - 1) / 2]
    }

    pub(crate) fn from_parts(
        nodes: Vec<ClusterNode>,
        metric: Metric,
        config: BuildConfig,
        n_points: usize,
    ) -> Self {
        ClusterTree {
            nodes,
            metric,
            config,
            n_points,
            build_comparisons: 0,
        }
    }
}

const ROOT_KEY: u64 = 0x243F_6A88_85A3_08D3;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn child_key(parent: u64, right: bool) -> u64 {
    splitmix64(
        parent
            ^ if right {
                0xA5A5_A5A5_A5A5_A5A5
            } else {
                0x5A5A_5A5A_5A5A_5A5A
            },
    )
}

fn node_rng(seed: u64, key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ key))
}

/// `⌈√m⌉` clamped to `[lo, m]`.
fn seed_count(m: usize, lo: usize) -> usize {
    let mut s = (m as f64).sqrt().ceil() as usize;
    while s * s < m {
        s += 1;
    }
    while s > 1 && (s - 1) * (s - 1) >= m {
        s -= 1;
    }
    s.max(lo).min(m)
}

fn sample_seeds(members: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut seeds: Vec<usize> = sample(rng, members.len(), count)
        .into_iter()
        .map(|pos| members[pos])
        .collect();
    seeds.sort_unstable();
    seeds
}

/// The sampled point minimizing the summed distance to the rest of a
/// `⌈√m⌉`-point sample. Ties go to the lowest index.
pub fn approximate_median(
    members: &[usize],
    dataset: &Dataset,
    metric: Metric,
    counter: &mut ComparisonCounter,
    rng: &mut ChaCha8Rng,
) -> usize {
    let seeds = sample_seeds(members, seed_count(members.len(), 1), rng);
    let mut sums = vec![0.0; seeds.len()];
    for i in 0..seeds.len() {
        for j in i + 1..seeds.len() {
            let d = counter.eval(metric, dataset.point(seeds[i]), dataset.point(seeds[j]));
            sums[i] += d;
            sums[j] += d;
        }
    }
    let best = (0..seeds.len())
        .min_by(|&a, &b| sums[a].total_cmp(&sums[b]).then(seeds[a].cmp(&seeds[b])))
        .expect("at least one seed");
    seeds[best]
}

/// Draws `max(2, ⌈√m⌉)` distinct seeds and returns the pair furthest apart,
/// lower index first. Ties prefer the lexicographically smallest pair.
pub fn select_poles(
    members: &[usize],
    dataset: &Dataset,
    metric: Metric,
    counter: &mut ComparisonCounter,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize)> {
    if members.len() < 2 {
        return Err(ChessError::precondition(
            "select_poles needs at least two members",
        ));
    }
    let seeds = sample_seeds(members, seed_count(members.len(), 2), rng);
    Ok(farthest_pair(&seeds, dataset, metric, counter))
}

/// The pair of `seeds` (ascending, at least two) at maximum distance.
pub(crate) fn farthest_pair(
    seeds: &[usize],
    dataset: &Dataset,
    metric: Metric,
    counter: &mut ComparisonCounter,
) -> (usize, usize) {
    let mut best = (f64::NEG_INFINITY, seeds[0], seeds[1]);
    for i in 0..seeds.len() {
        for j in i + 1..seeds.len() {
            let d = counter.eval(metric, dataset.point(seeds[i]), dataset.point(seeds[j]));
            // Seeds are ascending, so the first pair reaching the maximum is
            // the lexicographically smallest one.
            if d > best.0 {
                best = (d, seeds[i], seeds[j]);
            }
        }
    }
    (best.1, best.2)
}

/// Result of bisecting one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub left_center: usize,
    pub right_center: usize,
    /// Distance of each `left` member to `left_center`, aligned with `left`.
    pub left_distances: Vec<f64>,
    pub right_distances: Vec<f64>,
}

/// Bisects `members` around two poles. A member goes left when it is at least
/// as close to the left pole as to the right one.
///
/// If every sampled seed coincides (all pairwise seed distances are zero)
/// while the members do not, the right pole is replaced by the member
/// furthest from the left pole so the split still makes progress.
pub fn partition(
    members: &[usize],
    dataset: &Dataset,
    metric: Metric,
    counter: &mut ComparisonCounter,
    rng: &mut ChaCha8Rng,
) -> Result<Split> {
    let (left_center, mut right_center) = select_poles(members, dataset, metric, counter, rng)?;
    let lp = dataset.point(left_center);
    let to_left: Vec<f64> = members
        .iter()
        .map(|&x| {
            if x == left_center {
                0.0
            } else {
                counter.eval(metric, lp, dataset.point(x))
            }
        })
        .collect();

    let right_pos = members
        .iter()
        .position(|&x| x == right_center)
        .expect("pole is a member");
    if to_left[right_pos] == 0.0 {
        let (pos, far) =
            to_left.iter().enumerate().fold(
                (0, 0.0),
                |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
            );
        if far > 0.0 {
            right_center = members[pos];
        }
    }

    let rp = dataset.point(right_center);
    let mut split = Split {
        left: Vec::new(),
        right: Vec::new(),
        left_center,
        right_center,
        left_distances: Vec::new(),
        right_distances: Vec::new(),
    };
    for (&x, &dl) in members.iter().zip(&to_left) {
        if x == left_center {
            split.left.push(x);
            split.left_distances.push(0.0);
            continue;
        }
        if x == right_center {
            split.right.push(x);
            split.right_distances.push(0.0);
            continue;
        }
        let dr = counter.eval(metric, rp, dataset.point(x));
        if dl <= dr {
            split.left.push(x);
            split.left_distances.push(dl);
        } else {
            split.right.push(x);
            split.right_distances.push(dr);
        }
    }
    Ok(split)
}

struct BuildNode {
    node: ClusterNode,
    children: Option<Box<(BuildNode, BuildNode)>>,
}

struct Builder<'a> {
    dataset: &'a Dataset,
    metric: Metric,
    config: BuildConfig,
    parallelism: Parallelism,
}

impl Builder<'_> {
    fn grow(
        &self,
        members: Vec<usize>,
        center: usize,
        distances: Vec<f64>,
        depth: usize,
        key: u64,
    ) -> (BuildNode, ComparisonCounter) {
        let radius = distances.iter().copied().fold(0.0, f64::max);
        let cardinality = members.len();
        let lfd = lfd_from_distances(&distances, radius);
        let mut counter = ComparisonCounter::new();

        let is_leaf =
            depth >= self.config.max_depth || cardinality <= self.config.min_size || radius == 0.0;
        if is_leaf {
            let node = ClusterNode {
                center,
                radius,
                cardinality,
                lfd,
                depth,
                children: None,
                members,
            };
            return (
                BuildNode {
                    node,
                    children: None,
                },
                counter,
            );
        }

        let mut rng = node_rng(self.config.seed, key);
        let split = partition(&members, self.dataset, self.metric, &mut counter, &mut rng)
            .expect("internal nodes hold at least two members");
        drop(members);

        let Split {
            left,
            right,
            left_center,
            right_center,
            left_distances,
            right_distances,
        } = split;
        let grow_left = || {
            self.grow(
                left,
                left_center,
                left_distances,
                depth + 1,
                child_key(key, false),
            )
        };
        let grow_right = || {
            self.grow(
                right,
                right_center,
                right_distances,
                depth + 1,
                child_key(key, true),
            )
        };
        let ((l, lc), (r, rc)) = if cardinality >= PARALLEL_SPLIT_THRESHOLD {
            self.parallelism.join(grow_left, grow_right)
        } else {
            (grow_left(), grow_right())
        };
        counter.absorb(lc);
        counter.absorb(rc);

        let node = ClusterNode {
            center,
            radius,
            cardinality,
            lfd,
            depth,
            children: None,
            members: Vec::new(),
        };
        (
            BuildNode {
                node,
                children: Some(Box::new((l, r))),
            },
            counter,
        )
    }
}

/// Writes `root` into `nodes` in pre-order and returns its id.
fn flatten(root: BuildNode, nodes: &mut Vec<ClusterNode>) -> NodeId {
    let id = nodes.len();
    nodes.push(root.node);
    if let Some(children) = root.children {
        let (l, r) = *children;
        let l = flatten(l, nodes);
        let r = flatten(r, nodes);
        nodes[id].children = Some((l, r));
    }
    id
}
