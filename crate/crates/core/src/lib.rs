//! Clustered hierarchical entropy-scaling search.
//!
//! A binary divisive cluster tree over a metric space, exact range and k-NN
//! search that prunes with the triangle inequality, cluster-geometry
//! diagnostics, leaf-level delta compression, and a benchmark harness that
//! counts distance comparisons against a linear scan.
//!
//! ```
//! use chess_core::{dataset, search, BuildConfig, ClusterTree, Metric};
//!
//! let data = dataset::synth_manifold(2000, 50, 1, 0.0, 7).unwrap();
//! let tree = ClusterTree::build(&data, Metric::Euclidean, BuildConfig::default()).unwrap();
//! let report = search::rho_search(&tree, &data, data.point(0), 0.1).unwrap();
//! assert!(report.hits.iter().any(|h| h.index == 0));
//! ```

pub mod benchmark;
pub mod compression;
pub mod dataset;
mod error;
pub mod metric;
pub mod parallel;
pub mod search;
pub mod tree;

pub use dataset::{DataKind, Dataset};
pub use error::{ChessError, Result};
pub use metric::{ComparisonCounter, Metric, Point, PointRef};
pub use parallel::Parallelism;
pub use tree::{BuildConfig, ClusterNode, ClusterTree, NodeId};
