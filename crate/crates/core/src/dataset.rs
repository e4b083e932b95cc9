//! In-memory datasets and their on-disk formats.
//!
//! Dense data lives in `CHESSVEC` files: the 8 ASCII bytes `CHESSVEC`, a
//! version byte `0x01`, `n` and `dim` as little-endian `u64`, then `n * dim`
//! little-endian binary64 values in row-major order.
//!
//! Aligned sequences are plain text, one record per line, optionally with
//! FASTA-style `>` header lines which are skipped.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{ChessError, Result};
use crate::metric::{Metric, PointRef};

pub const CHESSVEC_MAGIC: &[u8; 8] = b"CHESSVEC";
pub const CHESSVEC_VERSION: u8 = 0x01;
const CHESSVEC_HEADER_LEN: usize = 8 + 1 + 8 + 8;

/// Alphabet of aligned nucleotide sequences, including the gap character.
pub const ALPHABET: &[u8; 5] = b"ACGT-";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    DenseVectors,
    AlignedStrings,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::DenseVectors => "dense",
            DataKind::AlignedStrings => "sequence",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    Sequences(Vec<u8>),
}

/// An ordered collection of equally shaped points.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    storage: Storage,
}

impl Dataset {
    /// Builds a dense dataset from row-major values.
    pub fn from_dense(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(ChessError::precondition("dimension must be positive"));
        }
        if values.is_empty() {
            return Err(ChessError::precondition(
                "dataset must hold at least one point",
            ));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(ChessError::Dimension {
                expected: dim,
                found: values.len() % dim,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ChessError::DegenerateInput(format!(
                "non-finite value at point {}, coordinate {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Dataset {
            dim,
            storage: Storage::Dense(values),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(ChessError::Dimension {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::from_dense(dim, rows.concat())
    }

    /// Builds a sequence dataset, upper-casing input and dropping duplicate
    /// records (first occurrence wins).
    pub fn from_sequences<I, S>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let mut dim = 0;
        let mut chars = Vec::new();
        let mut seen = HashSet::new();
        for (line, record) in records.into_iter().enumerate() {
            let record = normalize_record(record.as_ref(), line + 1)?;
            if dim == 0 {
                dim = record.len();
            } else if record.len() != dim {
                return Err(ChessError::Sequence {
                    line: line + 1,
                    column: None,
                    message: format!("record length {} differs from {dim}", record.len()),
                });
            }
            if seen.insert(record.clone()) {
                chars.extend_from_slice(&record);
            }
        }
        if chars.is_empty() {
            return Err(ChessError::precondition(
                "dataset must hold at least one point",
            ));
        }
        Ok(Dataset {
            dim,
            storage: Storage::Sequences(chars),
        })
    }

    pub fn kind(&self) -> DataKind {
        match self.storage {
            Storage::Dense(_) => DataKind::DenseVectors,
            Storage::Sequences(_) => DataKind::AlignedStrings,
        }
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Dense(v) => v.len() / self.dim,
            Storage::Sequences(s) => s.len() / self.dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> PointRef<'_> {
        let range = i * self.dim..(i + 1) * self.dim;
        match &self.storage {
            Storage::Dense(v) => PointRef::Dense(&v[range]),
            Storage::Sequences(s) => PointRef::Sequence(&s[range]),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = PointRef<'_>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Row-major values of a dense dataset.
    pub fn dense_values(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(v) => Some(v),
            Storage::Sequences(_) => None,
        }
    }

    /// Checks that `point` has this dataset's kind and shape.
    pub fn check_point(&self, point: PointRef<'_>) -> Result<()> {
        let same_kind = matches!(
            (&self.storage, point),
            (Storage::Dense(_), PointRef::Dense(_))
                | (Storage::Sequences(_), PointRef::Sequence(_))
        );
        if !same_kind || point.len() != self.dim {
            return Err(ChessError::Dimension {
                expected: self.dim,
                found: point.len(),
            });
        }
        if let PointRef::Sequence(s) = point {
            if let Some(col) = s.iter().position(|c| !ALPHABET.contains(c)) {
                return Err(ChessError::Sequence {
                    line: 1,
                    column: Some(col + 1),
                    message: format!("illegal character {:?}", s[col] as char),
                });
            }
        }
        if let PointRef::Dense(v) = point {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ChessError::DegenerateInput("non-finite coordinate".into()));
            }
        }
        Ok(())
    }

    /// Checks that `metric` can index this dataset.
    pub fn check_metric(&self, metric: Metric) -> Result<()> {
        let ok = match self.kind() {
            DataKind::DenseVectors => metric.applies_to_dense(),
            DataKind::AlignedStrings => !metric.applies_to_dense(),
        };
        if !ok {
            return Err(ChessError::IncompatibleMetric {
                metric: metric.name(),
                kind: self.kind().name(),
            });
        }
        if metric == Metric::Cosine {
            if let Some(i) = self
                .points()
                .position(|p| matches!(p, PointRef::Dense(v) if v.iter().all(|&x| x == 0.0)))
            {
                return Err(ChessError::DegenerateInput(format!(
                    "point {i} is the zero vector, cosine distance is undefined"
                )));
            }
        }
        Ok(())
    }

    /// Appends a point and returns its index.
    pub fn push(&mut self, point: PointRef<'_>) -> Result<usize> {
        self.check_point(point)?;
        match (&mut self.storage, point) {
            (Storage::Dense(v), PointRef::Dense(p)) => v.extend_from_slice(p),
            (Storage::Sequences(s), PointRef::Sequence(p)) => s.extend_from_slice(p),
            _ => unreachable!("checked above"),
        }
        Ok(self.len() - 1)
    }

    /// A new dataset made of the given points, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let storage = match &self.storage {
            Storage::Dense(_) => Storage::Dense(
                indices
                    .iter()
                    .flat_map(|&i| match self.point(i) {
                        PointRef::Dense(v) => v.iter().copied(),
                        PointRef::Sequence(_) => unreachable!(),
                    })
                    .collect(),
            ),
            Storage::Sequences(_) => Storage::Sequences(
                indices
                    .iter()
                    .flat_map(|&i| match self.point(i) {
                        PointRef::Sequence(s) => s.iter().copied(),
                        PointRef::Dense(_) => unreachable!(),
                    })
                    .collect(),
            ),
        };
        Dataset {
            dim: self.dim,
            storage,
        }
    }

    /// Canonical byte serialization: `CHESSVEC` for dense data, one
    /// LF-terminated record per line for sequences.
    pub fn to_bytes(&self) -> Vec<u8> {
        match &self.storage {
            Storage::Dense(values) => encode_chessvec(self.len(), self.dim, values),
            Storage::Sequences(chars) => {
                let mut out = Vec::with_capacity(chars.len() + self.len());
                for record in chars.chunks(self.dim) {
                    out.extend_from_slice(record);
                    out.push(b'\n');
                }
                out
            }
        }
    }

    /// SHA-256 of [`Dataset::to_bytes`]. Identical to the hash of the file the
    /// dataset was loaded from whenever that file is already canonical.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}

fn normalize_record(record: &[u8], line: usize) -> Result<Vec<u8>> {
    record
        .iter()
        .enumerate()
        .map(|(col, &c)| {
            let up = c.to_ascii_uppercase();
            if ALPHABET.contains(&up) {
                Ok(up)
            } else {
                Err(ChessError::Sequence {
                    line,
                    column: Some(col + 1),
                    message: format!("illegal character {:?}", c as char),
                })
            }
        })
        .collect()
}

pub fn encode_chessvec(n: usize, dim: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHESSVEC_HEADER_LEN + values.len() * 8);
    out.extend_from_slice(CHESSVEC_MAGIC);
    out.push(CHESSVEC_VERSION);
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a `CHESSVEC` image. `base` is added to reported offsets, for images
/// embedded in a larger file.
pub fn decode_chessvec(bytes: &[u8], base: u64) -> Result<Dataset> {
    if bytes.len() < CHESSVEC_HEADER_LEN {
        return Err(ChessError::format(
            base + bytes.len() as u64,
            "truncated CHESSVEC header",
        ));
    }
    if &bytes[..8] != CHESSVEC_MAGIC {
        return Err(ChessError::format(base, "bad magic, expected CHESSVEC"));
    }
    if bytes[8] != CHESSVEC_VERSION {
        return Err(ChessError::format(
            base + 8,
            format!("unsupported version {:#04x}", bytes[8]),
        ));
    }
    let n = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    let dim = u64::from_le_bytes(bytes[17..25].try_into().unwrap());
    if n == 0 || dim == 0 {
        return Err(ChessError::format(base + 9, "n and dim must be positive"));
    }
    let expected = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(CHESSVEC_HEADER_LEN as u64))
        .ok_or_else(|| ChessError::format(base + 9, "header size overflows"))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(ChessError::format(
            base + actual,
            format!("truncated payload: header promises {expected} bytes, found {actual}"),
        ));
    }
    if actual > expected {
        return Err(ChessError::format(
            base + expected,
            format!("{} trailing bytes after payload", actual - expected),
        ));
    }
    let mut values = Vec::with_capacity((n * dim) as usize);
    for (i, chunk) in bytes[CHESSVEC_HEADER_LEN..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(ChessError::format(
                base + (CHESSVEC_HEADER_LEN + 8 * i) as u64,
                "non-finite value",
            ));
        }
        values.push(v);
    }
    Dataset::from_dense(dim as usize, values)
}

pub fn load_dense(path: impl AsRef<Path>) -> Result<Dataset> {
    decode_chessvec(&fs::read(path)?, 0)
}

pub fn save_dense(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if dataset.kind() != DataKind::DenseVectors {
        return Err(ChessError::precondition(
            "save_dense requires a dense dataset",
        ));
    }
    fs::write(path, dataset.to_bytes())?;
    Ok(())
}

pub fn parse_sequences(text: &[u8]) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut dim = None;
    for (i, raw) in text.split(|&b| b == b'\n').enumerate() {
        let line = raw.strip_suffix(b"\r").unwrap_or(raw);
        if line.is_empty() || line[0] == b'>' {
            continue;
        }
        let record = normalize_record(line, i + 1)?;
        match dim {
            None => dim = Some(record.len()),
            Some(d) if d != record.len() => {
                return Err(ChessError::Sequence {
                    line: i + 1,
                    column: None,
                    message: format!("record length {} differs from {d}", record.len()),
                })
            }
            _ => {}
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(ChessError::precondition("no sequence records found"));
    }
    Dataset::from_sequences(records)
}

pub fn load_sequences(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_sequences(&fs::read(path)?)
}

pub fn save_sequences(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if dataset.kind() != DataKind::AlignedStrings {
        return Err(ChessError::precondition(
            "save_sequences requires a sequence dataset",
        ));
    }
    fs::write(path, dataset.to_bytes())?;
    Ok(())
}

/// Loads either format, telling them apart by the `CHESSVEC` magic.
pub fn load_any(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(CHESSVEC_MAGIC) {
        decode_chessvec(&bytes, 0)
    } else {
        parse_sequences(&bytes)
    }
}

/// Writes a dataset in its native format.
pub fn save_any(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, dataset.to_bytes())?;
    Ok(())
}

/// Points drawn uniformly from a random `intrinsic_dim`-dimensional affine
/// patch of `embed_dim`-space, plus isotropic Gaussian noise of scale
/// `noise`, translated so every coordinate is nonnegative.
pub fn synth_manifold(
    n: usize,
    embed_dim: usize,
    intrinsic_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 2 {
        return Err(ChessError::precondition("synth_manifold needs n >= 2"));
    }
    if intrinsic_dim == 0 || intrinsic_dim > embed_dim {
        return Err(ChessError::precondition(
            "intrinsic_dim must satisfy 1 <= intrinsic_dim <= embed_dim",
        ));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(ChessError::precondition(
            "noise must be finite and nonnegative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis: Vec<f64> = (0..embed_dim * intrinsic_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let noise_dist = Normal::new(0.0, noise).expect("noise validated above");
    let mut values = Vec::with_capacity(n * embed_dim);
    let mut latent = vec![0.0; intrinsic_dim];
    for _ in 0..n {
        latent.iter_mut().for_each(|t| *t = rng.random::<f64>());
        for row in basis.chunks(intrinsic_dim) {
            let x: f64 = row.iter().zip(&latent).map(|(a, t)| a * t).sum();
            let jitter = if noise > 0.0 {
                noise_dist.sample(&mut rng)
            } else {
                0.0
            };
            values.push(x + jitter);
        }
    }
    let mut mins = vec![f64::INFINITY; embed_dim];
    for row in values.chunks(embed_dim) {
        for (m, &v) in mins.iter_mut().zip(row) {
            *m = m.min(v);
        }
    }
    for row in values.chunks_mut(embed_dim) {
        for (v, m) in row.iter_mut().zip(&mins) {
            *v -= m;
        }
    }
    Dataset::from_dense(embed_dim, values)
}

/// Aligned sequences grown by a mutation process: `ancestors` random roots,
/// after which every new record copies a random earlier record of its family
/// and substitutes `1..=max_mutations` random positions. Duplicates are
/// dropped, so the result may hold fewer than `n` records.
pub fn synth_sequences(
    n: usize,
    length: usize,
    ancestors: usize,
    max_mutations: usize,
    seed: u64,
) -> Result<Dataset> {
    if ancestors == 0 || n < ancestors || length == 0 || max_mutations == 0 {
        return Err(ChessError::precondition(
            "synth_sequences needs 1 <= ancestors <= n, length > 0, max_mutations > 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nucleotides = &ALPHABET[..4];
    let mut records: Vec<Vec<u8>> = Vec::with_capacity(n);
    let mut families: Vec<Vec<usize>> = vec![Vec::new(); ancestors];
    for family in families.iter_mut() {
        family.push(records.len());
        records.push(
            (0..length)
                .map(|_| nucleotides[rng.random_range(0..4)])
                .collect(),
        );
    }
    while records.len() < n {
        let f = rng.random_range(0..ancestors);
        let parent = families[f][rng.random_range(0..families[f].len())];
        let mut child = records[parent].clone();
        let edits = rng.random_range(1..=max_mutations.min(length));
        for pos in sample(&mut rng, length, edits) {
            let current = child[pos];
            let choices: Vec<u8> = ALPHABET.iter().copied().filter(|&c| c != current).collect();
            child[pos] = choices[rng.random_range(0..choices.len())];
        }
        families[f].push(records.len());
        records.push(child);
    }
    Dataset::from_sequences(records)
}
