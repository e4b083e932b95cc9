//! Distance functions and comparison counting.
//!
//! Every distance evaluation performed by the index goes through a
//! [`ComparisonCounter`] so that builds and searches can report exactly how
//! many comparisons they spent.

use std::fmt;
use std::str::FromStr;

use crate::error::{ChessError, Result};

/// A borrowed view of one point of a dataset (or of a query).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointRef<'a> {
    Dense(&'a [f64]),
    Sequence(&'a [u8]),
}

/// An owned point, used for queries and insertions.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Dense(Vec<f64>),
    Sequence(Vec<u8>),
}

impl Point {
    pub fn as_ref(&self) -> PointRef<'_> {
        match self {
            Point::Dense(v) => PointRef::Dense(v),
            Point::Sequence(s) => PointRef::Sequence(s),
        }
    }
}

impl PointRef<'_> {
    pub fn len(&self) -> usize {
        match self {
            PointRef::Dense(v) => v.len(),
            PointRef::Sequence(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_owned(&self) -> Point {
        match *self {
            PointRef::Dense(v) => Point::Dense(v.to_vec()),
            PointRef::Sequence(s) => Point::Sequence(s.to_vec()),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            PointRef::Dense(_) => "dense",
            PointRef::Sequence(_) => "sequence",
        }
    }
}

/// The supported distance functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Euclidean,
    Cosine,
    Hamming,
    Levenshtein,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Euclidean,
        Metric::Cosine,
        Metric::Hamming,
        Metric::Levenshtein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::Hamming => "hamming",
            Metric::Levenshtein => "levenshtein",
        }
    }

    /// Stable identifier used in the on-disk tree format.
    pub fn id(self) -> u8 {
        match self {
            Metric::Euclidean => 0,
            Metric::Cosine => 1,
            Metric::Hamming => 2,
            Metric::Levenshtein => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.id() == id)
    }

    /// Whether the triangle inequality holds, which is what makes pruned
    /// search exact.
    pub fn obeys_triangle_inequality(self) -> bool {
        !matches!(self, Metric::Cosine)
    }

    pub fn applies_to_dense(self) -> bool {
        matches!(self, Metric::Euclidean | Metric::Cosine)
    }

    /// Checks that `a` and `b` can be compared under this metric.
    pub fn check(self, a: PointRef<'_>, b: PointRef<'_>) -> Result<()> {
        match (self, a, b) {
            (Metric::Euclidean | Metric::Cosine, PointRef::Dense(x), PointRef::Dense(y)) => {
                if x.len() != y.len() {
                    return Err(ChessError::Dimension {
                        expected: x.len(),
                        found: y.len(),
                    });
                }
                if self == Metric::Cosine && (is_zero(x) || is_zero(y)) {
                    return Err(ChessError::DegenerateInput(
                        "cosine distance is undefined for the zero vector".into(),
                    ));
                }
                Ok(())
            }
            (Metric::Hamming, PointRef::Sequence(x), PointRef::Sequence(y)) => {
                if x.len() != y.len() {
                    return Err(ChessError::Dimension {
                        expected: x.len(),
                        found: y.len(),
                    });
                }
                Ok(())
            }
            (Metric::Levenshtein, PointRef::Sequence(_), PointRef::Sequence(_)) => Ok(()),
            (_, PointRef::Dense(_), PointRef::Sequence(_))
            | (_, PointRef::Sequence(_), PointRef::Dense(_)) => Err(ChessError::Dimension {
                expected: a.len(),
                found: b.len(),
            }),
            _ => Err(ChessError::IncompatibleMetric {
                metric: self.name(),
                kind: a.kind_name(),
            }),
        }
    }

    /// Distance between two points, validating their shapes first.
    pub fn distance(self, a: PointRef<'_>, b: PointRef<'_>) -> Result<f64> {
        self.check(a, b)?;
        Ok(self.eval(a, b))
    }

    /// Distance between two points already known to be compatible.
    pub(crate) fn eval(self, a: PointRef<'_>, b: PointRef<'_>) -> f64 {
        match (self, a, b) {
            (Metric::Euclidean, PointRef::Dense(x), PointRef::Dense(y)) => euclidean(x, y),
            (Metric::Cosine, PointRef::Dense(x), PointRef::Dense(y)) => cosine(x, y),
            (Metric::Hamming, PointRef::Sequence(x), PointRef::Sequence(y)) => hamming(x, y) as f64,
            (Metric::Levenshtein, PointRef::Sequence(x), PointRef::Sequence(y)) => {
                levenshtein(x, y) as f64
            }
            _ => unreachable!("{} applied to incompatible points", self.name()),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = ChessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            "hamming" => Ok(Metric::Hamming),
            "levenshtein" => Ok(Metric::Levenshtein),
            other => Err(ChessError::precondition(format!(
                "unknown metric {other:?}"
            ))),
        }
    }
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `1 - cos(a, b)`, clamped to be nonnegative. Exactly zero for identical inputs.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

pub fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// Number of distance evaluations spent by one build or one query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ComparisonCounter {
    count: u64,
}

impl ComparisonCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Folds a counter owned by a finished sub-task into this one.
    pub fn absorb(&mut self, other: ComparisonCounter) {
        self.count += other.count;
    }

    /// Same result as [`Metric::distance`], plus one tick of the counter.
    pub fn distance(&mut self, metric: Metric, a: PointRef<'_>, b: PointRef<'_>) -> Result<f64> {
        let d = metric.distance(a, b)?;
        self.count += 1;
        Ok(d)
    }

    pub(crate) fn eval(&mut self, metric: Metric, a: PointRef<'_>, b: PointRef<'_>) -> f64 {
        self.count += 1;
        metric.eval(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(v: &[f64]) -> PointRef<'_> {
        PointRef::Dense(v)
    }

    fn seq(s: &str) -> PointRef<'_> {
        PointRef::Sequence(s.as_bytes())
    }

    #[test]
    fn basic_examples() {
        let x = [1.5, 2.0, 7.25];
        assert_eq!(
            Metric::Euclidean.distance(dense(&x), dense(&x)).unwrap(),
            0.0
        );
        assert_eq!(
            Metric::Hamming.distance(seq("ACGT"), seq("ACGA")).unwrap(),
            1.0
        );
        assert_eq!(
            Metric::Euclidean
                .distance(dense(&[3.0, 4.0]), dense(&[0.0, 0.0]))
                .unwrap(),
            5.0
        );
        assert_eq!(
            Metric::Cosine
                .distance(dense(&[1.0, 0.0]), dense(&[2.0, 0.0]))
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            Metric::Euclidean.distance(dense(&[1.0]), dense(&[1.0, 2.0])),
            Err(ChessError::Dimension { .. })
        ));
        assert!(matches!(
            Metric::Hamming.distance(seq("AC"), seq("ACG")),
            Err(ChessError::Dimension { .. })
        ));
        assert!(matches!(
            Metric::Cosine.distance(dense(&[0.0, 0.0]), dense(&[1.0, 2.0])),
            Err(ChessError::DegenerateInput(_))
        ));
        assert!(matches!(
            Metric::Euclidean.distance(seq("AC"), seq("AC")),
            Err(ChessError::IncompatibleMetric { .. })
        ));
        // Levenshtein accepts unequal lengths.
        assert_eq!(
            Metric::Levenshtein.distance(seq("AC"), seq("ACG")).unwrap(),
            1.0
        );
    }

    #[test]
    fn levenshtein_known_values() {
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein(b"", b"ACG"), 3);
        assert_eq!(levenshtein(b"ACGT", b""), 4);
        assert_eq!(levenshtein(b"ACGT", b"CGTA"), 2);
    }

    #[test]
    fn counter_ticks_once_per_call() {
        let mut counter = ComparisonCounter::new();
        let (a, b) = ([1.0, 2.0], [2.0, 3.0]);
        counter
            .distance(Metric::Euclidean, dense(&a), dense(&b))
            .unwrap();
        assert_eq!(counter.count(), 1);
        for _ in 0..9 {
            counter
                .distance(Metric::Euclidean, dense(&a), dense(&b))
                .unwrap();
        }
        assert_eq!(counter.count(), 10);
    }

    #[test]
    fn counted_matches_plain_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counter = ComparisonCounter::new();
        for _ in 0..100 {
            let a: Vec<f64> = (0..16).map(|_| rng.random_range(0.1..10.0)).collect();
            let b: Vec<f64> = (0..16).map(|_| rng.random_range(0.1..10.0)).collect();
            for metric in [Metric::Euclidean, Metric::Cosine] {
                let plain = metric.distance(dense(&a), dense(&b)).unwrap();
                let counted = counter.distance(metric, dense(&a), dense(&b)).unwrap();
                assert_eq!(plain.to_bits(), counted.to_bits());
            }
        }
        assert_eq!(counter.count(), 200);
    }

    #[test]
    fn cosine_violates_triangle_inequality() {
        let a = [1.0, 0.0];
        let b = [1.0, 1.0];
        let c = [0.0, 1.0];
        let ab = cosine(&a, &b);
        let bc = cosine(&b, &c);
        let ac = cosine(&a, &c);
        assert!(ac > ab + bc, "{ac} <= {ab} + {bc}");
        assert!(!Metric::Cosine.obeys_triangle_inequality());
    }

    #[test]
    fn metric_ids_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::from_id(m.id()), Some(m));
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert_eq!(Metric::from_id(9), None);
    }
}
