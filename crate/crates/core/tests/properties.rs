#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use label_remedy::datasets::{decode_raw, encode_raw, l2_normalize_columns};
use label_remedy::utsp::{
    adjacency_mask, cosine_similarity, delete_isolated, partition_subset, root_node,
    similarity_threshold, spanning_tree_select,
};
use label_remedy::{
    remedy, utsp_partition, AdjacencyMask, FeatureMatrix, LabeledDomain, NnModel, PseudoLabelState,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(dim: usize, n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-5.0f64..5.0, dim * n).prop_map(move |v| DMatrix::from_vec(dim, n, v))
}

fn features() -> impl Strategy<Value = FeatureMatrix> {
    (1usize..6, 2usize..16)
        .prop_flat_map(|(d, n)| matrix(d, n))
        .prop_map(|m| FeatureMatrix::new(m).unwrap())
}

fn dense(mask: &AdjacencyMask) -> Dense {
    let n = mask.order();
    (0..n)
        .map(|i| (0..n).map(|j| mask.has_edge(i, j)).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn threshold_is_the_ranked_upper_entry(x in features(), rho in 0.01f64..0.99) {
        let (sim, _) = cosine_similarity(&x);
        let rows: Vec<Vec<f64>> = (0..sim.nrows()).map(|i| sim.row(i).iter().copied().collect()).collect();
        match (similarity_threshold(&sim, rho), sorted_threshold(&rows, rho)) {
            (Ok(ours), Some(theirs)) => prop_assert_eq!(ours, theirs),
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn raising_rho_never_adds_edges(x in features(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (sim, _) = cosine_similarity(&x);
        if let (Ok(d_lo), Ok(d_hi)) = (similarity_threshold(&sim, lo), similarity_threshold(&sim, hi)) {
            prop_assert!(adjacency_mask(&sim, d_hi).edge_count() <= adjacency_mask(&sim, d_lo).edge_count());
        }
    }

    #[test]
    fn selection_is_the_dominant_component(n in 1usize..40, p in 0.02f64..0.6, seed in any::<u64>()) {
        let adj = erdos_renyi(n, p, &mut rng(seed));
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| adj[i][j])
            .collect();
        let mask = AdjacencyMask::from_edges(n, &edges);
        prop_assert_eq!(dense(&mask), adj.clone());
        let split = delete_isolated(&mask);
        let ours: Vec<usize> = match root_node(&split.mask.degrees()) {
            Some(root) => spanning_tree_select(&split.mask, root)
                .nodes
                .iter()
                .map(|&l| split.retained[l])
                .collect(),
            None => Vec::new(),
        };
        prop_assert_eq!(ours, dominant_component(&adj));
    }

    #[test]
    fn class_split_matches_reference(x in features(), rho in 0.05f64..0.95) {
        let n = x.n_samples();
        let labels = vec![0; n];
        let subset: Vec<usize> = (0..n).collect();
        let parts = partition_subset(&x, &labels, &subset, rho).unwrap();
        let (high, low) = reference_class_split(&columns(&x), rho);
        prop_assert_eq!(&parts[0].high, &high);
        prop_assert_eq!(&parts[0].low, &low);
    }

    #[test]
    fn partition_is_exact_and_disjoint(x in features(), labels_seed in any::<u64>(), rho in 0.05f64..0.95) {
        use rand::Rng;
        let mut r = rng(labels_seed);
        let labels: Vec<usize> = (0..x.n_samples()).map(|_| r.random_range(0..3)).collect();
        let state = utsp_partition(&x, &PseudoLabelState::all_high(labels.clone()).unwrap(), rho).unwrap();
        let mut all: Vec<usize> = state.high_conf().iter().chain(state.low_conf()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..x.n_samples()).collect::<Vec<_>>());
        prop_assert_eq!(state.labels(), &labels[..]);
    }

    #[test]
    fn permuting_a_class_permutes_its_split(x in features(), rho in 0.05f64..0.95, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let n = x.n_samples();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(seed));
        let shuffled = x.select_columns(&perm).unwrap();
        let labels = vec![0; n];
        let subset: Vec<usize> = (0..n).collect();
        let a = partition_subset(&x, &labels, &subset, rho).unwrap();
        let b = partition_subset(&shuffled, &labels, &subset, rho).unwrap();
        // Ties in degree may pick a different root, but only if that root
        // lies in a component with the same maximal degree; restrict the
        // claim to the unambiguous case.
        let (sim, _) = cosine_similarity(&x);
        if let Ok(delta) = similarity_threshold(&sim, rho) {
            let degrees = adjacency_mask(&sim, delta).degrees();
            let top = degrees.iter().copied().max().unwrap_or(0);
            if degrees.iter().filter(|&&d| d == top).count() > 1 {
                return Ok(());
            }
        }
        let mut mapped: Vec<usize> = b[0].high.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, a[0].high.clone());
    }

    #[test]
    fn nn_reproduces_its_training_labels(x in features(), seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let labels: Vec<usize> = (0..x.n_samples()).map(|_| r.random_range(0..4)).collect();
        let model = NnModel::fit(x.clone(), labels.clone()).unwrap();
        let pred = model.predict(&x).unwrap();
        for i in 0..x.n_samples() {
            // Duplicate columns resolve to the first copy.
            let first = (0..x.n_samples()).find(|&j| x.column(j) == x.column(i)).unwrap();
            prop_assert_eq!(pred[i], labels[first]);
        }
    }

    #[test]
    fn nn_matches_exhaustive_scan(train in features(), q in 1usize..10, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let labels: Vec<usize> = (0..train.n_samples()).map(|_| r.random_range(0..3)).collect();
        let queries = FeatureMatrix::new(random_matrix(train.dim(), q, &mut r)).unwrap();
        let model = NnModel::fit(train.clone(), labels.clone()).unwrap();
        let cols = columns(&train);
        for (i, p) in model.predict(&queries).unwrap().into_iter().enumerate() {
            prop_assert_eq!(p, brute_nn(&cols, &labels, queries.column(i)));
        }
    }

    #[test]
    fn nn_is_translation_invariant(seed in any::<u64>(), shift in -3i32..3) {
        use rand::Rng;
        // Integer-valued coordinates keep the translated distances exact.
        let mut r = rng(seed);
        let train = DMatrix::from_fn(3, 8, |_, _| r.random_range(-4..5) as f64);
        let queries = DMatrix::from_fn(3, 5, |_, _| r.random_range(-4..5) as f64);
        let labels: Vec<usize> = (0..8).map(|_| r.random_range(0..3)).collect();
        let moved = |m: &DMatrix<f64>| FeatureMatrix::new(m.add_scalar(shift as f64)).unwrap();
        let a = NnModel::fit(FeatureMatrix::new(train.clone()).unwrap(), labels.clone()).unwrap()
            .predict(&FeatureMatrix::new(queries.clone()).unwrap()).unwrap();
        let b = NnModel::fit(moved(&train), labels).unwrap().predict(&moved(&queries)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn normalisation_is_idempotent(x in features()) {
        let once = l2_normalize_columns(&x);
        let twice = l2_normalize_columns(&once.features);
        prop_assert!((once.features.as_matrix() - twice.features.as_matrix()).amax() <= 1e-12);
        prop_assert_eq!(once.zero_columns, twice.zero_columns);
    }

    #[test]
    fn raw_round_trip_is_bit_exact(x in features()) {
        let bytes = encode_raw(&x);
        let back = decode_raw(std::path::Path::new("memory"), &bytes).unwrap();
        let same = x.as_matrix().iter().zip(back.as_matrix().iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
        prop_assert_eq!(back.as_matrix().shape(), x.as_matrix().shape());
    }
}

#[test]
fn scaling_one_class_leaves_the_partition_unchanged() {
    use rand::Rng;
    for seed in 0..50 {
        let mut r = rng(seed);
        let x = random_matrix(6, 30, &mut r);
        let labels: Vec<usize> = (0..30).map(|_| r.random_range(0..3)).collect();
        let pseudo = PseudoLabelState::all_high(labels.clone()).unwrap();
        let scaled = DMatrix::from_fn(6, 30, |i, j| {
            if labels[j] == 1 {
                x[(i, j)] * 7.3
            } else {
                x[(i, j)]
            }
        });
        let a = utsp_partition(&FeatureMatrix::new(x).unwrap(), &pseudo, 0.85).unwrap();
        let b = utsp_partition(&FeatureMatrix::new(scaled).unwrap(), &pseudo, 0.85).unwrap();
        assert_eq!(a.high_conf(), b.high_conf(), "seed {seed}");
    }
}

#[test]
fn remedy_matches_scripted_inner_loop_on_planted_noise() {
    use label_remedy::datasets::plant_label_noise;
    use rand_distr::{Distribution, Normal};

    let noise = Normal::new(0.0, 0.3).unwrap();
    for seed in 0..10 {
        let mut r = rng(seed);
        let centers = [[3.0, 0.5, 0.0], [0.0, 0.5, 3.0]];
        let sample = |c: usize, r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            centers[c].iter().map(|&m| m + noise.sample(r)).collect()
        };
        let src: Vec<Vec<f64>> = (0..40).map(|i| sample(i % 2, &mut r)).collect();
        let src_labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let tgt: Vec<Vec<f64>> = (0..60).map(|i| sample(i % 2, &mut r)).collect();
        let truth: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let crude = plant_label_noise(&truth, 2, 0.3, seed + 99);

        let source = LabeledDomain::new(
            FeatureMatrix::from_columns(&src).unwrap(),
            src_labels.clone(),
        )
        .unwrap();
        let target = FeatureMatrix::from_columns(&tgt).unwrap();
        let out = remedy(
            &source,
            &target,
            &PseudoLabelState::all_high(crude.clone()).unwrap(),
            0.85,
            3,
        )
        .unwrap();
        let (labels, high, low) = reference_remedy(&src, &src_labels, &tgt, &crude, 0.85, 3);

        assert_eq!(out.labels(), &labels[..], "seed {seed}");
        assert_eq!(out.high_conf(), &high[..]);
        assert_eq!(out.low_conf(), &low[..]);

        let hits = |l: &[usize]| l.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(
            hits(out.labels()) > hits(&crude),
            "seed {seed}: no improvement"
        );
    }
}
