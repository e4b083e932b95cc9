//! `CHESSTREE` files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CHESSTREE" | version u8 | metric id u8 | max_depth u64 | min_size u64 | seed u64
//! | dataset SHA-256 [32]
//! then one record per node in pre-order:
//!   flags u8 (bit 0 = has children) | center u64 | radius f64 | lfd f64 | cardinality u64
//!   leaves only: member count u64 | member indices u64...
//! ```

use std::fs;
use std::path::Path;

use super::{BuildConfig, ClusterNode, ClusterTree, NodeId};
use crate::dataset::Dataset;
use crate::error::{ChessError, Result};
use crate::metric::Metric;

pub const CHESSTREE_MAGIC: &[u8; 9] = b"CHESSTREE";
pub const CHESSTREE_VERSION: u8 = 0x01;
const HAS_CHILDREN: u8 = 0b1;

/// The fixed-size prefix shared by tree files and compressed archives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeHeader {
    pub metric: Metric,
    pub config: BuildConfig,
    pub dataset_hash: [u8; 32],
}

impl TreeHeader {
    pub const LEN: usize = 9 + 1 + 1 + 24 + 32;

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(CHESSTREE_MAGIC);
        out.push(CHESSTREE_VERSION);
        out.push(self.metric.id());
        out.extend_from_slice(&(self.config.max_depth as u64).to_le_bytes());
        out.extend_from_slice(&(self.config.min_size as u64).to_le_bytes());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        out.extend_from_slice(&self.dataset_hash);
    }

    pub fn decode(reader: &mut Reader<'_>) -> Result<Self> {
        let magic = reader.take(9)?;
        if magic != CHESSTREE_MAGIC {
            return Err(ChessError::format(
                reader.offset() - 9,
                "bad magic, expected CHESSTREE",
            ));
        }
        let version = reader.u8()?;
        if version != CHESSTREE_VERSION {
            return Err(ChessError::format(
                reader.offset() - 1,
                format!("unsupported version {version:#04x}"),
            ));
        }
        let id = reader.u8()?;
        let metric = Metric::from_id(id).ok_or_else(|| {
            ChessError::format(reader.offset() - 1, format!("unknown metric id {id}"))
        })?;
        let max_depth = reader.usize()?;
        let min_size = reader.usize()?;
        let seed = reader.u64()?;
        let dataset_hash = reader.take(32)?.try_into().unwrap();
        Ok(TreeHeader {
            metric,
            config: BuildConfig {
                max_depth,
                min_size,
                seed,
            },
            dataset_hash,
        })
    }

    /// Fails unless `dataset` hashes to the recorded fingerprint.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        let found = dataset.fingerprint();
        if found != self.dataset_hash {
            return Err(ChessError::HashMismatch {
                expected: hex(&self.dataset_hash),
                found: hex(&found),
            });
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Bounds-checked little-endian cursor that reports absolute byte offsets.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Reader {
            bytes,
            pos: 0,
            base: 0,
        }
    }

    pub fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(ChessError::format(
                self.base + self.bytes.len() as u64,
                format!("truncated: needed {len} bytes at offset {}", self.offset()),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let at = self.offset();
        usize::try_from(self.u64()?).map_err(|_| ChessError::format(at, "value exceeds usize"))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Encodes `tree`, recording the fingerprint of `dataset`.
pub fn encode_tree(tree: &ClusterTree, dataset: &Dataset) -> Result<Vec<u8>> {
    if dataset.len() != tree.len() {
        return Err(ChessError::precondition(format!(
            "tree indexes {} points but dataset holds {}",
            tree.len(),
            dataset.len()
        )));
    }
    let mut out = Vec::new();
    TreeHeader {
        metric: tree.metric(),
        config: tree.config(),
        dataset_hash: dataset.fingerprint(),
    }
    .encode(&mut out);
    for id in tree.preorder() {
        let node = tree.node(id);
        out.push(if node.is_leaf() { 0 } else { HAS_CHILDREN });
        out.extend_from_slice(&(node.center as u64).to_le_bytes());
        out.extend_from_slice(&node.radius.to_le_bytes());
        out.extend_from_slice(&node.lfd.to_le_bytes());
        out.extend_from_slice(&(node.cardinality as u64).to_le_bytes());
        if node.is_leaf() {
            out.extend_from_slice(&(node.members.len() as u64).to_le_bytes());
            for &m in &node.members {
                out.extend_from_slice(&(m as u64).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn serialize(tree: &ClusterTree, dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tree(tree, dataset)?)?;
    Ok(())
}

/// Decodes a tree image and checks it against `dataset`.
pub fn decode_tree(bytes: &[u8], dataset: &Dataset) -> Result<ClusterTree> {
    let mut reader = Reader::new(bytes);
    let header = TreeHeader::decode(&mut reader)?;
    header.check_dataset(dataset)?;
    let n = dataset.len();

    let mut nodes: Vec<ClusterNode> = Vec::new();
    // Nodes still waiting for their children: (id, children read so far).
    let mut open: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
    loop {
        let at = reader.offset();
        let flags = reader.u8()?;
        if flags & !HAS_CHILDREN != 0 {
            return Err(ChessError::format(
                at,
                format!("unknown node flags {flags:#04x}"),
            ));
        }
        let center_at = reader.offset();
        let center = reader.usize()?;
        if center >= n {
            return Err(ChessError::format(
                center_at,
                format!("center {center} out of range"),
            ));
        }
        let radius = reader.f64()?;
        let lfd = reader.f64()?;
        let cardinality = reader.usize()?;
        let depth = open.len();
        let mut members = Vec::new();
        if flags & HAS_CHILDREN == 0 {
            let count_at = reader.offset();
            let count = reader.usize()?;
            if count != cardinality || count > reader.remaining() / 8 {
                return Err(ChessError::format(
                    count_at,
                    "leaf member count is inconsistent",
                ));
            }
            members.reserve(count);
            for _ in 0..count {
                let m_at = reader.offset();
                let m = reader.usize()?;
                if m >= n {
                    return Err(ChessError::format(m_at, format!("member {m} out of range")));
                }
                members.push(m);
            }
        }
        let id = nodes.len();
        nodes.push(ClusterNode {
            center,
            radius,
            cardinality,
            lfd,
            depth,
            children: None,
            members,
        });
        if let Some((_, kids)) = open.last_mut() {
            kids.push(id);
        }
        if flags & HAS_CHILDREN != 0 {
            open.push((id, Vec::with_capacity(2)));
        } else {
            // Close every parent whose two children are now complete.
            while let Some((parent, kids)) = open.last() {
                if kids.len() < 2 {
                    break;
                }
                nodes[*parent].children = Some((kids[0], kids[1]));
                open.pop();
            }
            if open.is_empty() {
                break;
            }
        }
    }
    if reader.remaining() != 0 {
        return Err(ChessError::format(
            reader.offset(),
            "trailing bytes after last node",
        ));
    }
    if nodes[0].cardinality != n {
        return Err(ChessError::format(
            TreeHeader::LEN as u64,
            format!("root holds {} points, dataset {n}", nodes[0].cardinality),
        ));
    }
    Ok(ClusterTree::from_parts(
        nodes,
        header.metric,
        header.config,
        n,
    ))
}

pub fn deserialize(path: impl AsRef<Path>, dataset: &Dataset) -> Result<ClusterTree> {
    decode_tree(&fs::read(path)?, dataset)
}
