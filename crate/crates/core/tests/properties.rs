mod common;

use std::collections::BTreeSet;

use connfuse::dataio::ConnectivityMatrix;
use connfuse::featprep::{devectorize_upper_triangular, vectorize_upper_triangular};
use connfuse::fusion::{masked_cross_entropy, CrossAttentionBlock, FusionConfig, FusionMode};
use connfuse::harness::{loso_split, roc_auc, stratified_kfold, trapezoid};
use connfuse::numcore::{Mat, ParamStore, Tape};
use connfuse::popgraph::pae_edge_weight;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{pairwise_auc, random_mat};

fn latent(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn edge_weight_range_symmetry_scale(
        (a, b) in (1usize..24).prop_flat_map(|d| (latent(d), latent(d))),
        c in 0.01f64..100.0,
    ) {
        let w = pae_edge_weight(&a, &b);
        prop_assert!((0.0..=1.0).contains(&w));
        prop_assert_eq!(w, pae_edge_weight(&b, &a));
        if a.iter().any(|v| v.abs() > 1e-6) {
            let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
            prop_assert!((pae_edge_weight(&scaled, &b) - w).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_pairwise_equals_trapezoid(
        data in prop::collection::vec((0u8..8, any::<bool>()), 2..80),
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 7.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        let roc = roc_auc(&scores, &labels);
        match roc.auc {
            Some(auc) => {
                prop_assert!((auc - trapezoid(&roc.points)).abs() < 1e-12);
                prop_assert!((auc - pairwise_auc(&scores, &labels)).abs() < 1e-12);
            }
            None => prop_assert!(labels.iter().all(|&y| y) || labels.iter().all(|&y| !y)),
        }
    }

    #[test]
    fn kfold_partitions_and_stratifies(
        labels in prop::collection::vec(0usize..2, 10..120),
        k in 2usize..8,
        seed in any::<u64>(),
    ) {
        let counts = [labels.iter().filter(|&&l| l == 0).count(), labels.iter().filter(|&&l| l == 1).count()];
        let plan = match stratified_kfold(&labels, k, seed) {
            Ok(p) => p,
            Err(_) => {
                prop_assert!(counts.iter().any(|&c| c < k));
                return Ok(());
            }
        };
        prop_assert_eq!(plan.folds.len(), k);
        let mut seen = BTreeSet::new();
        for f in &plan.folds {
            prop_assert_eq!(f.train.len() + f.test.len(), labels.len());
            for &i in &f.test {
                prop_assert!(seen.insert(i));
                prop_assert!(f.train.binary_search(&i).is_err());
            }
            for (class, &total) in counts.iter().enumerate() {
                let here = f.test.iter().filter(|&&i| labels[i] == class).count();
                prop_assert!(here == total / k || here == total / k + 1);
            }
        }
        prop_assert_eq!(seen.len(), labels.len());
        prop_assert_eq!(stratified_kfold(&labels, k, seed).unwrap(), plan);
    }

    #[test]
    fn loso_covers_each_site_once(sites in prop::collection::vec(0u8..5, 2..60)) {
        let names: Vec<String> = sites.iter().map(|s| format!("S{s}")).collect();
        let distinct: BTreeSet<&String> = names.iter().collect();
        match loso_split(&names) {
            Ok(plan) => {
                prop_assert_eq!(plan.folds.len(), distinct.len());
                let mut covered = 0;
                for f in &plan.folds {
                    let site = f.site.clone().unwrap();
                    prop_assert!(f.test.iter().all(|&i| names[i] == site));
                    prop_assert!(f.train.iter().all(|&i| names[i] != site));
                    covered += f.test.len();
                }
                prop_assert_eq!(covered, names.len());
            }
            Err(_) => prop_assert_eq!(distinct.len(), 1),
        }
    }

    #[test]
    fn vectorize_round_trip(r in 2usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = random_mat(r, r, &mut rng);
        let mut m = &half + &half.t();
        m.diag_mut().fill(0.0);
        let v = vectorize_upper_triangular(&ConnectivityMatrix::new(m.clone()).unwrap()).unwrap();
        prop_assert_eq!(v.len(), r * (r - 1) / 2);
        prop_assert_eq!(devectorize_upper_triangular(&v).unwrap(), m);
    }

    #[test]
    fn loss_is_permutation_invariant(n in 2usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_mat(n, 2, &mut rng) * 4.0;
        let labels: Vec<usize> = (0..n).map(|i| (seed as usize >> (i % 60)) & 1).collect();
        let mask: Vec<usize> = (0..n).filter(|i| i % 3 != 2).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(seed as usize % n);
        let inverse: Vec<usize> = {
            let mut inv = vec![0; n];
            for (new, &old) in perm.iter().enumerate() {
                inv[old] = new;
            }
            inv
        };
        let p_logits = Mat::from_shape_fn((n, 2), |(i, j)| logits[[perm[i], j]]);
        let p_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let p_mask: Vec<usize> = mask.iter().map(|&i| inverse[i]).collect();
        let tape = Tape::new();
        let a = masked_cross_entropy(tape.constant(logits), &labels, &mask).unwrap().value()[[0, 0]];
        let b = masked_cross_entropy(tape.constant(p_logits), &p_labels, &p_mask).unwrap().value()[[0, 0]];
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn asymmetry_witness() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (n, d) = (6, 8);
    let mut store = ParamStore::new();
    let config = FusionConfig {
        mode: FusionMode::Asymmetric,
        dropout: 0.0,
        ..FusionConfig::default()
    };
    let block = CrossAttentionBlock::new(&mut store, "b", d, &config, &mut rng).unwrap();
    let h_f = random_mat(n, d, &mut rng);
    let h_s = random_mat(n, d, &mut rng);
    let run = |f: &Mat, s: &Mat| {
        let tape = Tape::new();
        let b = store.bind(&tape);
        let out = block.forward(tape.constant(f.clone()), tape.constant(s.clone()), &b, false, 0).unwrap();
        let v = out.value().clone();
        v
    };
    let base = run(&h_f, &h_s);

    let mut f2 = h_f.clone();
    f2.row_mut(2).mapv_inplace(|v| v + 0.5);
    let moved = run(&f2, &h_s);
    for i in 0..n {
        let changed = moved.row(i) != base.row(i);
        assert_eq!(changed, i == 2, "row {i} after perturbing functional row 2");
    }

    let mut s2 = h_s.clone();
    s2.row_mut(2).mapv_inplace(|v| v + 0.5);
    let moved = run(&h_f, &s2);
    let others = (0..n).filter(|&i| i != 2 && moved.row(i) != base.row(i)).count();
    assert_eq!(others, n - 1);
}
