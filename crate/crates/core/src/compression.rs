//! Leaf-level delta compression.
//!
//! Each leaf is stored as its member indices plus, per member, the
//! difference from the leaf center: integer deltas on the quantization grid
//! for dense data, substitution lists for aligned sequences. Each block is
//! deflate-compressed and guarded by a CRC32.
//!
//! Archive layout, integers little-endian:
//!
//! ```text
//! CHESSTREE header (see tree::TreeHeader)
//! kind u8 (0 dense, 1 sequences) | n u64 | dim u64 | quantum f64 | leaf count u64
//! centers: byte length u64, then a CHESSVEC image (dense, grid-snapped) or
//!          leaf count × dim ASCII bytes (sequences), in pre-order leaf order
//! per leaf, pre-order: block length u64 | deflate bytes | CRC32 u32 of those bytes
//! ```
//!
//! Block payload before deflate: center index, member count, gap-coded
//! ascending member indices, then per member either `dim` zigzag deltas or an
//! edit count followed by `(position u32, character u8)` pairs. Unless noted,
//! integers in the payload are LEB128 varints.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::dataset::{decode_chessvec, encode_chessvec, DataKind, Dataset, ALPHABET};
use crate::error::{ChessError, Result};
use crate::metric::{Metric, PointRef};
use crate::parallel::Parallelism;
use crate::tree::io::Reader;
use crate::tree::{ClusterTree, NodeId, TreeHeader};

/// Grid spacing of a photometric limit of magnitude 12.2: `10^(-12.2 / 2.5)`.
pub fn default_quantum() -> f64 {
    10f64.powf(-12.2 / 2.5)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantizer {
    quantum: f64,
}

impl Default for Quantizer {
    fn default() -> Self {
        Quantizer {
            quantum: default_quantum(),
        }
    }
}

impl Quantizer {
    pub fn new(quantum: f64) -> Result<Self> {
        if !(quantum.is_finite() && quantum > 0.0) {
            return Err(ChessError::precondition(format!(
                "quantum must be finite and positive, got {quantum}"
            )));
        }
        Ok(Quantizer { quantum })
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    pub fn quantize(&self, value: f64) -> Result<i64> {
        quantize(value, self.quantum)
    }

    pub fn dequantize(&self, q: i64) -> f64 {
        q as f64 * self.quantum
    }

    /// Snaps `value` to the nearest grid point.
    pub fn snap(&self, value: f64) -> Result<f64> {
        Ok(self.dequantize(self.quantize(value)?))
    }
}

/// Largest grid index magnitude that still maps to a distinct binary64.
const MAX_GRID: f64 = 9_007_199_254_740_992.0;

/// Nearest grid index to `value`, with halves rounded away from zero.
pub fn quantize(value: f64, quantum: f64) -> Result<i64> {
    if !value.is_finite() {
        return Err(ChessError::DegenerateInput(format!(
            "cannot quantize {value}"
        )));
    }
    let ratio = value / quantum;
    if ratio.abs() >= MAX_GRID {
        return Err(ChessError::DegenerateInput(format!(
            "{value} lies beyond the grid range for quantum {quantum}"
        )));
    }
    let k = ratio.round() as i64;
    // `value / quantum` can be off by an ulp near a half; settle on whichever
    // neighbor really is closest once multiplied back.
    let err = |k: i64| (value - k as f64 * quantum).abs();
    let mut best = k;
    for cand in [k - 1, k + 1] {
        let (e, b) = (err(cand), err(best));
        if e < b || (e == b && cand.unsigned_abs() > best.unsigned_abs()) {
            best = cand;
        }
    }
    Ok(best)
}

pub fn dequantize(q: i64, quantum: f64) -> f64 {
    q as f64 * quantum
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct VarintReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl VarintReader<'_> {
    fn varint(&mut self) -> Option<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = *self.bytes.get(self.pos)?;
            self.pos += 1;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Some(v);
            }
        }
        None
    }

    fn bytes(&mut self, len: usize) -> Option<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + len)?;
        self.pos += len;
        Some(s)
    }
}

/// Per-member differences from the leaf center.
#[derive(Clone, Debug, PartialEq)]
pub enum Deltas {
    /// `members × dim` grid deltas, row-major.
    Dense(Vec<i64>),
    /// Substitutions turning the center into each member.
    Edits(Vec<Vec<(u32, u8)>>),
}

/// One leaf in delta form.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafDeltaBlock {
    pub center: usize,
    /// Ascending point indices.
    pub members: Vec<usize>,
    pub deltas: Deltas,
}

impl LeafDeltaBlock {
    /// Raw (pre-deflate) payload.
    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_varint(&mut out, self.center as u64);
        put_varint(&mut out, self.members.len() as u64);
        let mut prev = 0;
        for &m in &self.members {
            put_varint(&mut out, (m - prev) as u64);
            prev = m;
        }
        match &self.deltas {
            Deltas::Dense(d) => d.iter().for_each(|&v| put_varint(&mut out, zigzag(v))),
            Deltas::Edits(edits) => {
                for list in edits {
                    put_varint(&mut out, list.len() as u64);
                    for &(pos, c) in list {
                        out.extend_from_slice(&pos.to_le_bytes());
                        out.push(c);
                    }
                }
            }
        }
        out
    }

    fn from_payload(bytes: &[u8], kind: DataKind, dim: usize) -> Option<Self> {
        let mut r = VarintReader { bytes, pos: 0 };
        let center = r.varint()? as usize;
        let count = r.varint()? as usize;
        if count > bytes.len() {
            return None;
        }
        let mut members = Vec::with_capacity(count);
        let mut prev = 0usize;
        for i in 0..count {
            let gap = r.varint()? as usize;
            if i > 0 && gap == 0 {
                return None;
            }
            prev = prev.checked_add(gap)?;
            members.push(prev);
        }
        let deltas = match kind {
            DataKind::DenseVectors => {
                let mut d = Vec::with_capacity(count.checked_mul(dim)?);
                for _ in 0..count * dim {
                    d.push(unzigzag(r.varint()?));
                }
                Deltas::Dense(d)
            }
            DataKind::AlignedStrings => {
                let mut edits = Vec::with_capacity(count);
                for _ in 0..count {
                    let len = r.varint()? as usize;
                    if len > dim {
                        return None;
                    }
                    let mut list = Vec::with_capacity(len);
                    for _ in 0..len {
                        let raw = r.bytes(5)?;
                        let pos = u32::from_le_bytes(raw[..4].try_into().unwrap());
                        if pos as usize >= dim {
                            return None;
                        }
                        list.push((pos, raw[4]));
                    }
                    edits.push(list);
                }
                Deltas::Edits(edits)
            }
        };
        (r.pos == bytes.len()).then_some(LeafDeltaBlock {
            center,
            members,
            deltas,
        })
    }

    /// Length-prefixed, deflated, CRC-trailed image of this block.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&self.payload())?;
        let packed = enc.finish()?;
        let mut out = Vec::with_capacity(packed.len() + 12);
        out.extend_from_slice(&(packed.len() as u64).to_le_bytes());
        out.extend_from_slice(&packed);
        out.extend_from_slice(&crc32fast::hash(&packed).to_le_bytes());
        Ok(out)
    }

    fn read(reader: &mut Reader<'_>, kind: DataKind, dim: usize) -> Result<Self> {
        let at = reader.offset();
        let len = reader.usize()?;
        if len > reader.remaining() {
            return Err(ChessError::format(
                at,
                format!("block length {len} overruns the file"),
            ));
        }
        let packed = reader.take(len)?;
        let crc_at = reader.offset();
        let crc = reader.u32()?;
        if crc32fast::hash(packed) != crc {
            return Err(ChessError::Corrupt {
                offset: crc_at,
                message: "checksum mismatch".into(),
            });
        }
        let mut payload = Vec::new();
        DeflateDecoder::new(packed)
            .read_to_end(&mut payload)
            .map_err(|e| ChessError::Corrupt {
                offset: at + 8,
                message: format!("inflate failed: {e}"),
            })?;
        LeafDeltaBlock::from_payload(&payload, kind, dim).ok_or_else(|| ChessError::Corrupt {
            offset: at + 8,
            message: "malformed block payload".into(),
        })
    }
}

/// Encodes one leaf of `tree` as deltas from its center.
///
/// Under Hamming distance every member's edit count is checked against the
/// leaf radius.
pub fn encode_leaf(
    tree: &ClusterTree,
    leaf: NodeId,
    dataset: &Dataset,
    quantizer: &Quantizer,
) -> Result<LeafDeltaBlock> {
    let node = tree.node(leaf);
    if !node.is_leaf() {
        return Err(ChessError::precondition(format!(
            "node {leaf} is not a leaf"
        )));
    }
    let members = node.members.clone();
    let deltas = match dataset.point(node.center) {
        PointRef::Dense(center) => {
            let base: Vec<i64> = center
                .iter()
                .map(|&v| quantizer.quantize(v))
                .collect::<Result<_>>()?;
            let mut d = Vec::with_capacity(members.len() * center.len());
            for &m in &members {
                let PointRef::Dense(p) = dataset.point(m) else {
                    unreachable!()
                };
                for (&v, &b) in p.iter().zip(&base) {
                    d.push(quantizer.quantize(v)? - b);
                }
            }
            Deltas::Dense(d)
        }
        PointRef::Sequence(center) => {
            let mut edits = Vec::with_capacity(members.len());
            for &m in &members {
                let PointRef::Sequence(s) = dataset.point(m) else {
                    unreachable!()
                };
                let list: Vec<(u32, u8)> = center
                    .iter()
                    .zip(s)
                    .enumerate()
                    .filter(|(_, (a, b))| a != b)
                    .map(|(i, (_, &b))| (i as u32, b))
                    .collect();
                if tree.metric() == Metric::Hamming && list.len() as f64 > node.radius {
                    return Err(ChessError::precondition(format!(
                        "member {m} needs {} edits but leaf radius is {}",
                        list.len(),
                        node.radius
                    )));
                }
                edits.push(list);
            }
            Deltas::Edits(edits)
        }
    };
    Ok(LeafDeltaBlock {
        center: node.center,
        members,
        deltas,
    })
}

/// Reconstructs the members of `block`, in `block.members` order, given the
/// (grid-snapped, for dense data) center. Dense output is flattened
/// row-major; sequence output is concatenated records.
pub fn decode_leaf(
    block: &LeafDeltaBlock,
    center: PointRef<'_>,
    quantizer: &Quantizer,
) -> Result<DecodedLeaf> {
    match (&block.deltas, center) {
        (Deltas::Dense(d), PointRef::Dense(c)) => {
            let base: Vec<i64> = c
                .iter()
                .map(|&v| quantizer.quantize(v))
                .collect::<Result<_>>()?;
            if d.len() != base.len() * block.members.len() {
                return Err(ChessError::Corrupt {
                    offset: 0,
                    message: "delta count does not match members × dim".into(),
                });
            }
            let values = d
                .chunks(base.len().max(1))
                .flat_map(|row| {
                    row.iter()
                        .zip(&base)
                        .map(|(&x, &b)| quantizer.dequantize(b + x))
                })
                .collect();
            Ok(DecodedLeaf::Dense(values))
        }
        (Deltas::Edits(edits), PointRef::Sequence(c)) => {
            let mut out = Vec::with_capacity(c.len() * edits.len());
            for list in edits {
                let start = out.len();
                out.extend_from_slice(c);
                for &(pos, ch) in list {
                    out[start + pos as usize] = ch;
                }
            }
            Ok(DecodedLeaf::Sequences(out))
        }
        _ => Err(ChessError::precondition(
            "center kind does not match block kind",
        )),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecodedLeaf {
    Dense(Vec<f64>),
    Sequences(Vec<u8>),
}

/// Serializes `dataset` as a delta archive over the leaves of `tree`.
pub fn compress_tree(
    tree: &ClusterTree,
    dataset: &Dataset,
    quantizer: &Quantizer,
    parallelism: Parallelism,
) -> Result<Vec<u8>> {
    if dataset.len() != tree.len() {
        return Err(ChessError::precondition("tree and dataset sizes differ"));
    }
    let leaves = tree.leaves();
    let mut out = Vec::new();
    TreeHeader {
        metric: tree.metric(),
        config: tree.config(),
        dataset_hash: dataset.fingerprint(),
    }
    .encode(&mut out);
    out.push(match dataset.kind() {
        DataKind::DenseVectors => 0,
        DataKind::AlignedStrings => 1,
    });
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dataset.dim() as u64).to_le_bytes());
    out.extend_from_slice(&quantizer.quantum().to_le_bytes());
    out.extend_from_slice(&(leaves.len() as u64).to_le_bytes());

    let centers = match dataset.kind() {
        DataKind::DenseVectors => {
            let mut snapped = Vec::with_capacity(leaves.len() * dataset.dim());
            for &leaf in &leaves {
                let PointRef::Dense(c) = dataset.point(tree.node(leaf).center) else {
                    unreachable!()
                };
                for &v in c {
                    snapped.push(quantizer.snap(v)?);
                }
            }
            encode_chessvec(leaves.len(), dataset.dim(), &snapped)
        }
        DataKind::AlignedStrings => leaves
            .iter()
            .flat_map(|&leaf| match dataset.point(tree.node(leaf).center) {
                PointRef::Sequence(s) => s.to_vec(),
                PointRef::Dense(_) => unreachable!(),
            })
            .collect(),
    };
    out.extend_from_slice(&(centers.len() as u64).to_le_bytes());
    out.extend_from_slice(&centers);

    let blocks = parallelism.map(&leaves, |&leaf| {
        encode_leaf(tree, leaf, dataset, quantizer).and_then(|b| b.to_bytes())
    });
    for block in blocks {
        out.extend_from_slice(&block?);
    }
    Ok(out)
}

pub fn compress_to_file(
    tree: &ClusterTree,
    dataset: &Dataset,
    quantizer: &Quantizer,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(
        path,
        compress_tree(tree, dataset, quantizer, Parallelism::default())?,
    )?;
    Ok(())
}

/// Summary of a decoded archive.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub header: TreeHeader,
    pub quantum: f64,
    pub dataset: Dataset,
}

/// Rebuilds the dataset held by an archive, in original point order.
pub fn decompress(bytes: &[u8]) -> Result<Archive> {
    let mut reader = Reader::new(bytes);
    let header = TreeHeader::decode(&mut reader)?;
    let kind_at = reader.offset();
    let kind = match reader.u8()? {
        0 => DataKind::DenseVectors,
        1 => DataKind::AlignedStrings,
        other => {
            return Err(ChessError::format(
                kind_at,
                format!("unknown data kind {other}"),
            ))
        }
    };
    let n_at = reader.offset();
    let n = reader.usize()?;
    let dim = reader.usize()?;
    if n == 0 || dim == 0 {
        return Err(ChessError::format(n_at, "n and dim must be positive"));
    }
    let q_at = reader.offset();
    let quantizer = Quantizer::new(reader.f64()?)
        .map_err(|_| ChessError::format(q_at, "quantum must be finite and positive"))?;
    let leaf_count = reader.usize()?;
    let centers_at = reader.offset();
    let centers_len = reader.usize()?;
    let centers_bytes = reader.take(centers_len)?;
    let dense_centers = match kind {
        DataKind::DenseVectors => {
            let c = decode_chessvec(centers_bytes, centers_at + 8)?;
            if c.len() != leaf_count || c.dim() != dim {
                return Err(ChessError::format(
                    centers_at,
                    "centers section shape mismatch",
                ));
            }
            Some(c)
        }
        DataKind::AlignedStrings => {
            if centers_len != leaf_count * dim {
                return Err(ChessError::format(
                    centers_at,
                    "centers section length mismatch",
                ));
            }
            if let Some(i) = centers_bytes.iter().position(|c| !ALPHABET.contains(c)) {
                return Err(ChessError::format(
                    centers_at + 8 + i as u64,
                    "invalid center character",
                ));
            }
            None
        }
    };

    let mut dense = vec![
        0.0;
        if kind == DataKind::DenseVectors {
            n * dim
        } else {
            0
        }
    ];
    let mut chars = vec![
        0u8;
        if kind == DataKind::AlignedStrings {
            n * dim
        } else {
            0
        }
    ];
    let mut filled = vec![false; n];
    for slot in 0..leaf_count {
        let block_at = reader.offset();
        let block = LeafDeltaBlock::read(&mut reader, kind, dim)?;
        let center = match &dense_centers {
            Some(c) => c.point(slot),
            None => PointRef::Sequence(&centers_bytes[slot * dim..(slot + 1) * dim]),
        };
        let decoded = decode_leaf(&block, center, &quantizer).map_err(|_| ChessError::Corrupt {
            offset: block_at,
            message: "block does not match its center".into(),
        })?;
        for (row, &m) in block.members.iter().enumerate() {
            if m >= n || filled[m] {
                return Err(ChessError::Corrupt {
                    offset: block_at,
                    message: format!("member {m} is out of range or repeated"),
                });
            }
            filled[m] = true;
            match &decoded {
                DecodedLeaf::Dense(v) => {
                    dense[m * dim..(m + 1) * dim].copy_from_slice(&v[row * dim..(row + 1) * dim])
                }
                DecodedLeaf::Sequences(s) => {
                    chars[m * dim..(m + 1) * dim].copy_from_slice(&s[row * dim..(row + 1) * dim])
                }
            }
        }
    }
    if reader.remaining() != 0 {
        return Err(ChessError::format(
            reader.offset(),
            "trailing bytes after last block",
        ));
    }
    if let Some(missing) = filled.iter().position(|&f| !f) {
        return Err(ChessError::format(
            reader.offset(),
            format!("point {missing} is absent from every block"),
        ));
    }
    let dataset = match kind {
        DataKind::DenseVectors => Dataset::from_dense(dim, dense)?,
        DataKind::AlignedStrings => Dataset::from_sequences(chars.chunks(dim))?,
    };
    if dataset.len() != n {
        return Err(ChessError::format(
            n_at,
            "archive holds duplicate sequence records",
        ));
    }
    Ok(Archive {
        header,
        quantum: quantizer.quantum(),
        dataset,
    })
}

pub fn decompress_file(path: impl AsRef<Path>) -> Result<Archive> {
    decompress(&fs::read(path)?)
}

/// `dataset` with every coordinate snapped to the quantizer's grid.
pub fn snap_to_grid(dataset: &Dataset, quantizer: &Quantizer) -> Result<Dataset> {
    match dataset.dense_values() {
        Some(values) => Dataset::from_dense(
            dataset.dim(),
            values
                .iter()
                .map(|&v| quantizer.snap(v))
                .collect::<Result<_>>()?,
        ),
        None => Ok(dataset.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_sequences, synth_manifold};
    use crate::tree::BuildConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantize_examples() {
        let q = default_quantum();
        assert!((q - 1.318_256_738_556_407e-5).abs() < 1e-18);
        assert_eq!(quantize(0.0, q).unwrap(), 0);
        assert_eq!(quantize(3.0 * q + q / 4.0, q).unwrap(), 3);
        assert_eq!(quantize(-(3.0 * q + q / 4.0), q).unwrap(), -3);
        assert_eq!(quantize(2.5, 1.0).unwrap(), 3);
        assert_eq!(quantize(-2.5, 1.0).unwrap(), -3);
        assert!(quantize(f64::NAN, q).is_err());
        assert!(quantize(1e300, q).is_err());
        assert!(Quantizer::new(0.0).is_err());
    }

    #[test]
    fn quantization_error_is_at_most_half_a_quantum() {
        let q = default_quantum();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1_000_000 {
            let x: f64 = rng.random_range(-100.0..100.0);
            let back = dequantize(quantize(x, q).unwrap(), q);
            assert!((x - back).abs() <= q / 2.0, "{x} -> {back}");
        }
    }

    #[test]
    fn varint_and_zigzag() {
        for v in [0i64, 1, -1, 63, -64, 1 << 40, i64::MIN / 2, i64::MAX / 2] {
            assert_eq!(unzigzag(zigzag(v)), v);
            let mut out = Vec::new();
            put_varint(&mut out, zigzag(v));
            assert_eq!(
                VarintReader {
                    bytes: &out,
                    pos: 0
                }
                .varint(),
                Some(zigzag(v))
            );
        }
    }

    #[test]
    fn identical_members_give_empty_deltas() {
        let ds = Dataset::from_dense(3, vec![1.5; 30]).unwrap();
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let block = encode_leaf(&tree, 0, &ds, &Quantizer::default()).unwrap();
        assert_eq!(block.deltas, Deltas::Dense(vec![0; 30]));

        let seqs = Dataset::from_sequences(["ACGT", "ACGA", "TTTT"]).unwrap();
        let tree =
            ClusterTree::build(&seqs, Metric::Hamming, BuildConfig::new(5, 5, 0).unwrap()).unwrap();
        let block = encode_leaf(&tree, 0, &seqs, &Quantizer::default()).unwrap();
        let Deltas::Edits(edits) = &block.deltas else {
            panic!()
        };
        let center_row = block
            .members
            .iter()
            .position(|&m| m == block.center)
            .unwrap();
        assert!(edits[center_row].is_empty());
    }

    #[test]
    fn edit_list_length_is_hamming_distance() {
        let seqs = Dataset::from_sequences(["ACGTACGT", "ACGTACGT".replace("GTA", "CAC").as_str()])
            .unwrap();
        let tree =
            ClusterTree::build(&seqs, Metric::Hamming, BuildConfig::new(5, 5, 0).unwrap()).unwrap();
        let block = encode_leaf(&tree, 0, &seqs, &Quantizer::default()).unwrap();
        let Deltas::Edits(edits) = &block.deltas else {
            panic!()
        };
        let other = block
            .members
            .iter()
            .position(|&m| m != block.center)
            .unwrap();
        assert_eq!(edits[other].len(), 3);
    }

    #[test]
    fn sequence_archive_is_lossless() {
        let seqs = parse_sequences(b"ACGTACGTAA\nACGTACGTAC\nTTGTACGTAA\nACG-ACGTAA\nCCCCCCCCCC\n")
            .unwrap();
        let tree =
            ClusterTree::build(&seqs, Metric::Hamming, BuildConfig::new(5, 1, 0).unwrap()).unwrap();
        let bytes =
            compress_tree(&tree, &seqs, &Quantizer::default(), Parallelism::Sequential).unwrap();
        assert_eq!(decompress(&bytes).unwrap().dataset, seqs);
    }

    #[test]
    fn dense_archive_lands_on_grid_and_is_idempotent() {
        let ds = synth_manifold(600, 12, 2, 0.01, 5).unwrap();
        let quantizer = Quantizer::default();
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let once = decompress(&compress_tree(&tree, &ds, &quantizer, Parallelism::Rayon).unwrap())
            .unwrap()
            .dataset;
        assert_eq!(once, snap_to_grid(&ds, &quantizer).unwrap());
        let tree2 = ClusterTree::build(&once, Metric::Euclidean, BuildConfig::default()).unwrap();
        let twice =
            decompress(&compress_tree(&tree2, &once, &quantizer, Parallelism::Rayon).unwrap())
                .unwrap()
                .dataset;
        assert_eq!(twice, once);
    }

    #[test]
    fn corruption_is_detected() {
        let ds = synth_manifold(200, 4, 1, 0.0, 5).unwrap();
        let tree = ClusterTree::build(&ds, Metric::Euclidean, BuildConfig::default()).unwrap();
        let bytes =
            compress_tree(&tree, &ds, &Quantizer::default(), Parallelism::Sequential).unwrap();
        let mut bad = bytes.clone();
        let last = bad.len() - 6;
        bad[last] ^= 0xff;
        assert!(matches!(decompress(&bad), Err(ChessError::Corrupt { .. })));
        assert!(matches!(
            decompress(&bytes[..bytes.len() - 2]),
            Err(ChessError::Format { .. })
        ));
    }
}
