use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfkernel::forest::Node;
use rfkernel::kernels::{
    kernel_value_histogram, laplace_kernel, mantel_statistic, read_kernel, rf_kernel, write_kernel, KernelFormat,
};
use rfkernel::{FeatureMatrix, Forest, KernelKind, KernelMatrix, Target, TargetKind, Tree, TreeParams};

fn stump(threshold: f64) -> Tree {
    Tree::from_nodes(
        vec![
            Node::Split {
                feature: 0,
                threshold,
                left: 1,
                right: 2,
            },
            Node::Leaf { leaf_id: 0, value: 0.0 },
            Node::Leaf { leaf_id: 1, value: 1.0 },
        ],
        1,
        vec![],
    )
    .unwrap()
}

fn four_tree_forest() -> Forest {
    let trees = vec![stump(0.5), stump(0.1), stump(0.9), stump(0.35)];
    Forest::from_trees(trees, TreeParams::default_for(TargetKind::Continuous, 1), TargetKind::Continuous, 1, 0).unwrap()
}

#[test]
fn coterminal_fraction_matches_brute_force() {
    let forest = four_tree_forest();
    let x = FeatureMatrix::from_rows(&[vec![0.2], vec![0.4], vec![0.95]]).unwrap();
    let k = rf_kernel(&forest, &x, &x).unwrap();
    // rows 0.2 and 0.4 split only by the 0.35 stump
    assert_eq!(k.values[[0, 1]], 0.75);
    let ids = forest.terminal_leaf_ids(&x).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let shared = (0..4).filter(|&m| ids[[i, m]] == ids[[j, m]]).count();
            assert_eq!(k.values[[i, j]], shared as f64 / 4.0);
        }
    }
}

#[test]
fn single_leaf_forest_gives_ones() {
    let leaf = Tree::from_nodes(vec![Node::Leaf { leaf_id: 0, value: 0.0 }], 2, vec![]).unwrap();
    let forest = Forest::from_trees(vec![leaf], TreeParams::default_for(TargetKind::Continuous, 2), TargetKind::Continuous, 2, 0).unwrap();
    let a = FeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![5.0, -3.0]]).unwrap();
    let b = FeatureMatrix::from_rows(&[vec![2.0, 2.0]]).unwrap();
    let k = rf_kernel(&forest, &a, &b).unwrap();
    assert!(k.values.iter().all(|&v| v == 1.0));
    assert_eq!(k.values.dim(), (2, 1));
}

#[test]
fn laplace_examples() {
    let a = FeatureMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let b = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![2f64.ln() / 2.0, -(2f64.ln()) / 2.0]]).unwrap();
    let k = laplace_kernel(&a, &b, 1.0).unwrap();
    assert_eq!(k.values[[0, 0]], 1.0);
    assert!((k.values[[0, 1]] - 0.5).abs() < 1e-15);
    let mut last = 0.0;
    for sigma in [0.5, 1.0, 4.0, 100.0, 1e6] {
        let v = laplace_kernel(&a, &b, sigma).unwrap().values[[0, 1]];
        assert!(v > last);
        last = v;
    }
    assert!(last > 0.999_999);
    assert!(laplace_kernel(&a, &b, 0.0).is_err());
}

#[test]
fn mantel_hand_computed() {
    let k1 = KernelMatrix::new(
        ndarray::array![[1.0, 0.2, 0.4], [0.2, 1.0, 0.9], [0.4, 0.9, 1.0]],
        KernelKind::Custom,
    );
    let k2 = KernelMatrix::new(
        ndarray::array![[1.0, 0.1, 0.3], [0.1, 1.0, 0.2], [0.3, 0.2, 1.0]],
        KernelKind::Custom,
    );
    // lower triangle pairs: (0.2, 0.1), (0.4, 0.3), (0.9, 0.2)
    let (x, y) = ([0.2, 0.4, 0.9], [0.1, 0.3, 0.2]);
    let mx = x.iter().sum::<f64>() / 3.0;
    let my = y.iter().sum::<f64>() / 3.0;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r = sxy / (sxx * syy).sqrt();
    assert!((mantel_statistic(&k1, &k2).unwrap() - r).abs() < 1e-12);
    let affine = KernelMatrix::new(k1.values.mapv(|v| 3.0 * v + 0.5), KernelKind::Custom);
    assert!((mantel_statistic(&k1, &affine).unwrap() - 1.0).abs() < 1e-12);
    let flat = KernelMatrix::new(Array2::ones((3, 3)), KernelKind::Custom);
    assert!(mantel_statistic(&k1, &flat).is_err());
}

fn blobs(seed: u64) -> (FeatureMatrix, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..30 {
            rows.push(vec![centre[0] + rng.random::<f64>(), centre[1] + rng.random::<f64>()]);
            labels.push(c as u32);
        }
    }
    (FeatureMatrix::from_rows(&rows).unwrap(), labels)
}

#[test]
fn histograms_separate_well_separated_classes() {
    let (x, labels) = blobs(4);
    let params = TreeParams::default_for(TargetKind::Class, 2);
    let forest = Forest::fit(&x, &Target::Class(labels.clone()), &params, 200, 1).unwrap();
    let k = rf_kernel(&forest, &x, &x).unwrap();
    let h = kernel_value_histogram(&k, &labels, 20).unwrap();
    assert_eq!(h.same_class.total(), 3 * 30 * 29 / 2);
    assert_eq!(h.cross_class.total(), 3 * 30 * 30);
    assert!(h.same_class.mode_bin().unwrap() >= 15, "{:?}", h.same_class.counts);
    assert_eq!(h.cross_class.mode_bin(), Some(0));
}

#[test]
fn identity_kernel_histogram() {
    let k = KernelMatrix::new(Array2::eye(4), KernelKind::Custom);
    let h = kernel_value_histogram(&k, &[0, 0, 1, 1], 10).unwrap();
    assert_eq!(h.same_class.counts[0], 2);
    assert_eq!(h.same_class.total(), 2);
    let h = kernel_value_histogram(&k, &[1, 1, 1, 1], 10).unwrap();
    assert_eq!(h.cross_class.total(), 0);
}

#[test]
fn export_formats_round_trip() {
    let (x, labels) = blobs(1);
    let forest = Forest::fit(&x, &Target::Class(labels), &TreeParams::default_for(TargetKind::Class, 2), 7, 1).unwrap();
    let mut k = rf_kernel(&forest, &x.select_rows(&[0, 5, 40]), &x).unwrap();
    k.row_ids = vec![0, 5, 40];
    for format in [KernelFormat::Csv, KernelFormat::Binary] {
        let mut buf = Vec::new();
        write_kernel(&k, format, &mut buf).unwrap();
        if format == KernelFormat::Binary {
            assert_eq!(&buf[..4], b"RFKM");
        }
        let back = read_kernel(format, buf.as_slice()).unwrap();
        assert_eq!(back, k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn rf_kernel_invariants(seed in 0u64..10_000, n in 5usize..40, m in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 3.0 + r[1].sin()).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let forest = Forest::fit(&x, &Target::Continuous(y), &TreeParams::default_for(TargetKind::Continuous, 3), m, seed).unwrap();
        let k = rf_kernel(&forest, &x, &x).unwrap();
        for i in 0..n {
            prop_assert_eq!(k.values[[i, i]], 1.0);
            for j in 0..n {
                prop_assert_eq!(k.values[[i, j]], k.values[[j, i]]);
                let count = (k.values[[i, j]] * m as f64).round();
                prop_assert_eq!(k.values[[i, j]], count / m as f64);
                prop_assert!((0.0..=1.0).contains(&k.values[[i, j]]));
            }
        }
        if k.values.iter().any(|&v| v != 1.0) {
            let self_corr = mantel_statistic(&k, &k).unwrap();
            prop_assert!((self_corr - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_is_exchange_symmetric(seed in 0u64..10_000, sigma in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = FeatureMatrix::from_rows(&(0..6).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect::<Vec<_>>()).unwrap();
        let b = FeatureMatrix::from_rows(&(0..4).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect::<Vec<_>>()).unwrap();
        let kab = laplace_kernel(&a, &b, sigma).unwrap();
        let kba = laplace_kernel(&b, &a, sigma).unwrap();
        prop_assert_eq!(kab.values.t().to_owned(), kba.values);
    }

    #[test]
    fn mantel_permutation_invariant(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 7;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() * 3.0]).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let k1 = laplace_kernel(&x, &x, 1.0).unwrap();
        let k2 = laplace_kernel(&x, &x, 0.3).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let r = mantel_statistic(&k1, &k2).unwrap();
        let rp = mantel_statistic(&k1.select(&perm, &perm), &k2.select(&perm, &perm)).unwrap();
        prop_assert!((r - rp).abs() < 1e-12);
    }
}
