use chess_core::compression::{dequantize, quantize};
use chess_core::dataset::{decode_chessvec, encode_chessvec, ALPHABET};
use chess_core::metric::{hamming, levenshtein};
use chess_core::search::{knn_search, naive_search, rho_search};
use chess_core::tree::{decode_tree, encode_tree};
use chess_core::{BuildConfig, ClusterTree, Dataset, Metric, PointRef};
use proptest::prelude::*;

fn vectors(dim: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-100.0..100.0f64, dim), n)
}

fn strings(len: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<u8>>> {
    prop::collection::vec(
        prop::collection::vec(prop::sample::select(ALPHABET.to_vec()), len),
        n,
    )
}

fn dense(rows: &[Vec<f64>]) -> Dataset {
    Dataset::from_rows(rows).unwrap()
}

fn config() -> impl Strategy<Value = BuildConfig> {
    (1usize..40, 1usize..8, any::<u64>()).prop_map(|(d, m, s)| BuildConfig::new(d, m, s).unwrap())
}

proptest! {
    #[test]
    fn euclidean_is_a_metric(p in vectors(6, 3..4)) {
        let m = Metric::Euclidean;
        let d = |i: usize, j: usize| m.distance(PointRef::Dense(&p[i]), PointRef::Dense(&p[j])).unwrap();
        prop_assert_eq!(d(0, 0), 0.0);
        prop_assert_eq!(d(0, 1), d(1, 0));
        let tol = 1e-12 * (d(0, 1) + d(1, 2)).max(1.0);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + tol);
    }

    #[test]
    fn cosine_is_symmetric_and_nonnegative(p in vectors(5, 2..3)) {
        prop_assume!(p.iter().all(|v| v.iter().any(|x| *x != 0.0)));
        let m = Metric::Cosine;
        let a = m.distance(PointRef::Dense(&p[0]), PointRef::Dense(&p[1])).unwrap();
        let b = m.distance(PointRef::Dense(&p[1]), PointRef::Dense(&p[0])).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&a));
        prop_assert_eq!(m.distance(PointRef::Dense(&p[0]), PointRef::Dense(&p[0])).unwrap(), 0.0);
    }

    #[test]
    fn string_metrics_are_metrics(s in strings(12, 3..4)) {
        for m in [Metric::Hamming, Metric::Levenshtein] {
            let d = |i: usize, j: usize| m.distance(PointRef::Sequence(&s[i]), PointRef::Sequence(&s[j])).unwrap();
            prop_assert_eq!(d(0, 0), 0.0);
            prop_assert_eq!(d(0, 1), d(1, 0));
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2));
        }
        prop_assert!(hamming(&s[0], &s[1]) <= s[0].len());
        prop_assert!(levenshtein(&s[0], &s[1]) <= hamming(&s[0], &s[1]));
    }

    #[test]
    fn levenshtein_is_bounded_by_the_longer_string(
        a in prop::collection::vec(prop::sample::select(ALPHABET.to_vec()), 0..15),
        b in prop::collection::vec(prop::sample::select(ALPHABET.to_vec()), 0..15),
    ) {
        let d = levenshtein(&a, &b);
        prop_assert!(d <= a.len().max(b.len()));
        prop_assert!(d >= a.len().abs_diff(b.len()));
    }

    #[test]
    fn tree_partitions_and_bounds(rows in vectors(3, 1..300), cfg in config()) {
        let ds = dense(&rows);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, cfg).unwrap();
        let mut seen: Vec<usize> = tree.leaves().iter().flat_map(|&l| tree.node(l).members.clone()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..ds.len()).collect::<Vec<_>>());
        for (id, node) in tree.nodes().iter().enumerate() {
            let members = tree.members(id);
            prop_assert_eq!(members.len(), node.cardinality);
            prop_assert!(members.contains(&node.center));
            for m in members {
                let d = Metric::Euclidean.distance(ds.point(node.center), ds.point(m)).unwrap();
                prop_assert!(d <= node.radius);
            }
            if let Some((l, r)) = node.children {
                prop_assert_eq!(tree.node(l).cardinality + tree.node(r).cardinality, node.cardinality);
                prop_assert_eq!(tree.node(l).depth, node.depth + 1);
            } else {
                prop_assert!(node.depth >= cfg.max_depth || node.cardinality <= cfg.min_size || node.radius == 0.0);
            }
            prop_assert!(node.depth <= cfg.max_depth);
        }
    }

    #[test]
    fn build_is_deterministic_and_cheap(rows in vectors(4, 2..400), cfg in config()) {
        let ds = dense(&rows);
        let a = ClusterTree::build(&ds, Metric::Euclidean, cfg).unwrap();
        let b = ClusterTree::build(&ds, Metric::Euclidean, cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let n = ds.len() as u64;
        prop_assert!(a.build_comparisons() <= 3 * (a.depth() as u64 + 1) * n + n);
    }

    #[test]
    fn range_search_matches_linear_scan(
        rows in vectors(3, 2..300),
        q in prop::collection::vec(-100.0..100.0f64, 3),
        r in 0.0..120.0f64,
        cfg in config(),
    ) {
        let ds = dense(&rows);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, cfg).unwrap();
        let t = rho_search(&tree, &ds, PointRef::Dense(&q), r).unwrap();
        let n = naive_search(&ds, Metric::Euclidean, PointRef::Dense(&q), r).unwrap();
        prop_assert_eq!(t.hits, n.hits);
    }

    #[test]
    fn hamming_search_matches_linear_scan(s in strings(16, 2..200), r in 0usize..8, cfg in config()) {
        let ds = Dataset::from_sequences(s).unwrap();
        let tree = ClusterTree::build(&ds, Metric::Hamming, cfg).unwrap();
        let q = ds.point(0);
        let t = rho_search(&tree, &ds, q, r as f64).unwrap();
        let n = naive_search(&ds, Metric::Hamming, q, r as f64).unwrap();
        prop_assert_eq!(t.hits, n.hits);
    }

    #[test]
    fn cosine_search_has_no_false_positives(
        rows in vectors(3, 2..200),
        q in prop::collection::vec(0.5..100.0f64, 3),
        r in 0.0..0.5f64,
        cfg in config(),
    ) {
        prop_assume!(rows.iter().all(|v| v.iter().any(|x| *x != 0.0)));
        let ds = dense(&rows);
        let tree = ClusterTree::build(&ds, Metric::Cosine, cfg).unwrap();
        let t = rho_search(&tree, &ds, PointRef::Dense(&q), r).unwrap();
        let n = naive_search(&ds, Metric::Cosine, PointRef::Dense(&q), r).unwrap();
        let truth = n.indices();
        for hit in t.hits {
            prop_assert!(hit.distance <= r);
            prop_assert!(truth.binary_search(&hit.index).is_ok());
        }
    }

    #[test]
    fn knn_matches_brute_force(rows in vectors(2, 1..250), k in 1usize..30, cfg in config()) {
        let ds = dense(&rows);
        let k = k.min(ds.len());
        let tree = ClusterTree::build(&ds, Metric::Euclidean, cfg).unwrap();
        let q = [0.5, -0.5];
        let got = knn_search(&tree, &ds, PointRef::Dense(&q), k).unwrap();
        let all = naive_search(&ds, Metric::Euclidean, PointRef::Dense(&q), f64::INFINITY).unwrap();
        prop_assert_eq!(&got.hits[..], &all.hits[..k]);
    }

    #[test]
    fn serialized_tree_answers_identically(rows in vectors(3, 1..200), r in 0.0..80.0f64, cfg in config()) {
        let ds = dense(&rows);
        let tree = ClusterTree::build(&ds, Metric::Euclidean, cfg).unwrap();
        let back = decode_tree(&encode_tree(&tree, &ds).unwrap(), &ds).unwrap();
        for i in 0..ds.len().min(5) {
            let a = rho_search(&tree, &ds, ds.point(i), r).unwrap();
            let b = rho_search(&back, &ds, ds.point(i), r).unwrap();
            prop_assert_eq!(a.hits, b.hits);
            prop_assert_eq!(a.comparisons, b.comparisons);
        }
    }

    #[test]
    fn chessvec_round_trips_bytes(rows in vectors(4, 1..50)) {
        let ds = dense(&rows);
        let bytes = ds.to_bytes();
        let back = decode_chessvec(&bytes, 0).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        prop_assert_eq!(encode_chessvec(ds.len(), ds.dim(), ds.dense_values().unwrap()), bytes);
    }

    #[test]
    fn quantization_error_is_half_a_quantum(x in -1e6..1e6f64, q in 1e-6..1.0f64) {
        let back = dequantize(quantize(x, q).unwrap(), q);
        prop_assert!((back - x).abs() <= q / 2.0 * (1.0 + 1e-9));
    }

    #[test]
    fn insertion_keeps_search_exact(
        rows in vectors(2, 2..150),
        extra in vectors(2, 1..40),
        r in 0.0..60.0f64,
        cfg in config(),
    ) {
        let mut ds = dense(&rows);
        let mut tree = ClusterTree::build(&ds, Metric::Euclidean, cfg).unwrap();
        for p in &extra {
            tree.insert_point(&mut ds, PointRef::Dense(p)).unwrap();
        }
        prop_assert_eq!(tree.len(), ds.len());
        let q = [1.0, 2.0];
        let t = rho_search(&tree, &ds, PointRef::Dense(&q), r).unwrap();
        let n = naive_search(&ds, Metric::Euclidean, PointRef::Dense(&q), r).unwrap();
        prop_assert_eq!(t.hits, n.hits);
    }
}
