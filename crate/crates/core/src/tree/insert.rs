use super::{lfd_from_distances, ClusterNode, ClusterTree, NodeId};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::metric::{ComparisonCounter, PointRef};

/// A point further than this many leaf radii from the reached leaf's center
/// starts a new leaf of its own.
pub const DEFAULT_SPLIT_FACTOR: f64 = 2.0;

/// Outcome of one insertion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Insertion {
    pub index: usize,
    /// The leaf now holding the point.
    pub leaf: NodeId,
    /// Whether the reached leaf was split to host the point.
    pub split: bool,
    pub comparisons: u64,
}

impl ClusterTree {
    /// Appends `point` to `dataset` and files it into the tree with the
    /// default split factor.
    pub fn insert_point(
        &mut self,
        dataset: &mut Dataset,
        point: PointRef<'_>,
    ) -> Result<Insertion> {
        self.insert_point_with_factor(dataset, point, DEFAULT_SPLIT_FACTOR)
    }

    /// Descends from the root towards the nearer child center (ties left),
    /// widening radii and cardinalities along the way, and appends the point
    /// to the leaf it reaches. When the point lies more than
    /// `split_factor × radius` from a leaf with positive radius, the leaf is
    /// turned into an internal node over the old leaf and a new singleton
    /// leaf, unless it already sits at `max_depth`.
    ///
    /// Only the receiving leaf's LFD is refreshed; internal nodes keep the
    /// value computed at build time.
    pub fn insert_point_with_factor(
        &mut self,
        dataset: &mut Dataset,
        point: PointRef<'_>,
        split_factor: f64,
    ) -> Result<Insertion> {
        dataset.check_point(point)?;
        if dataset.len() != self.n_points {
            return Err(crate::ChessError::precondition(format!(
                "tree indexes {} points but dataset holds {}",
                self.n_points,
                dataset.len()
            )));
        }
        self.metric
            .check(point, dataset.point(self.nodes[0].center))?;
        let metric = self.metric;
        let mut counter = ComparisonCounter::new();

        let mut id: NodeId = 0;
        let mut dist = counter.eval(metric, point, dataset.point(self.nodes[0].center));
        let old_radius = loop {
            let node = &mut self.nodes[id];
            let before = node.radius;
            node.cardinality += 1;
            node.radius = before.max(dist);
            let Some((l, r)) = node.children else {
                break before;
            };
            let dl = counter.eval(metric, point, dataset.point(self.nodes[l].center));
            let dr = counter.eval(metric, point, dataset.point(self.nodes[r].center));
            (id, dist) = if dl <= dr { (l, dl) } else { (r, dr) };
        };

        let index = dataset.push(point)?;
        self.n_points += 1;

        let leaf = &self.nodes[id];
        let split = old_radius > 0.0
            && dist > split_factor * old_radius
            && leaf.depth < self.config.max_depth;

        let leaf_id = if split {
            let depth = self.nodes[id].depth + 1;
            let old = ClusterNode {
                center: self.nodes[id].center,
                radius: old_radius,
                cardinality: self.nodes[id].cardinality - 1,
                lfd: self.nodes[id].lfd,
                depth,
                children: None,
                members: std::mem::take(&mut self.nodes[id].members),
            };
            let fresh = ClusterNode {
                center: index,
                radius: 0.0,
                cardinality: 1,
                lfd: 0.0,
                depth,
                children: None,
                members: vec![index],
            };
            let (l, r) = (self.nodes.len(), self.nodes.len() + 1);
            self.nodes.push(old);
            self.nodes.push(fresh);
            self.nodes[id].children = Some((l, r));
            r
        } else {
            let leaf = &mut self.nodes[id];
            let pos = leaf.members.partition_point(|&m| m < index);
            leaf.members.insert(pos, index);
            let center = dataset.point(leaf.center);
            let distances: Vec<f64> = leaf
                .members
                .iter()
                .map(|&m| metric.eval(center, dataset.point(m)))
                .collect();
            leaf.lfd = lfd_from_distances(&distances, leaf.radius);
            id
        };

        Ok(Insertion {
            index,
            leaf: leaf_id,
            split,
            comparisons: counter.count(),
        })
    }
}
