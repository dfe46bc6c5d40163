//! Invariants of the public API over random inputs.

use std::collections::BTreeSet;

use acd_core::clustering::{assign_communities, fcm_from, dirichlet_memberships, Distance, FcmConfig};
use acd_core::corpus::{FeatureSpace, Partition};
use acd_core::encoder::{Encoder, EncoderConfig};
use acd_core::energy::{normalized_energies, siamese_energy, triplet_energy, triplet_loss};
use acd_core::evaluation::omega_index;
use acd_core::nn::checkpoint::{decode, encode, CheckpointHeader};
use acd_core::sampling::{epoch_resample, MetaArchitecture, SamplingPools};
use acd_core::seed;
use acd_core::synthetic::{generate, SyntheticConfig};
use proptest::prelude::*;

fn clustering(n: usize) -> impl Strategy<Value = Vec<BTreeSet<usize>>> {
    prop::collection::vec(prop::collection::btree_set(0..n, 1..=n), 1..5)
}

proptest! {
    #[test]
    fn omega_is_symmetric_and_bounded(a in clustering(8), b in clustering(8)) {
        let ab = omega_index(&a, &b, 8).unwrap();
        let ba = omega_index(&b, &a, 8).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
    }

    #[test]
    fn omega_of_identical_clusterings(a in clustering(7)) {
        let w = omega_index(&a, &a, 7).unwrap();
        prop_assert!((w - 1.0).abs() < 1e-12, "{}", w);
    }

    #[test]
    fn energies_are_in_range(x in prop::collection::vec(-5.0f64..5.0, 4), y in prop::collection::vec(-5.0f64..5.0, 4)) {
        let e = siamese_energy(&x, &y).unwrap();
        prop_assert!((0.0..1.0).contains(&e));
        prop_assert!(triplet_energy(&x, &y).unwrap() >= 0.0);
    }

    #[test]
    fn normalized_energies_sum_to_one(a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let (p, n) = normalized_energies(a, b);
        prop_assert_eq!(p + n, 1.0);
        prop_assert!((0.0..=1.0).contains(&triplet_loss(a, b)));
    }

    #[test]
    fn fcm_rows_are_distributions(seed_value in 0u64..1000, q in 2usize..5) {
        use rand::Rng;
        let mut rng = seed::rng(seed_value);
        let pts: Vec<Vec<f64>> = (0..15).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let init = dirichlet_memberships(15, q, &mut rng);
        let cfg = FcmConfig { distance: Distance::Manhattan, ..FcmConfig::default() };
        let m = fcm_from(&pts, init, &cfg).unwrap();
        for row in &m.matrix {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
        let a = assign_communities(&m.matrix, 0.2);
        let covered: BTreeSet<usize> = a.communities.iter().flatten().copied().collect();
        prop_assert_eq!(covered.len(), 15);
    }

    #[test]
    fn checkpoints_round_trip(seed_value in 0u64..50, epoch in 0u64..100) {
        let cfg = EncoderConfig { feature_dim: 6, token_dim: 4, embedding_dim: 3, context_pre: 1, context_post: 2, max_tokens: None };
        let (_, store) = Encoder::init(cfg, &mut seed::rng(seed_value)).unwrap();
        let header = CheckpointHeader { config_hash: cfg.config_hash(), epoch };
        let (h, back) = decode(&encode(&store, header)).unwrap();
        prop_assert_eq!(h, header);
        prop_assert!(back.bit_eq(&store));
    }
}

#[test]
fn synthetic_pipeline_is_deterministic() {
    let cfg = SyntheticConfig {
        meetings: 4,
        ..SyntheticConfig::default()
    };
    let a = generate(&cfg).unwrap();
    let b = generate(&cfg).unwrap();
    assert_eq!(a.meetings, b.meetings);

    let train = a.partition(Partition::Train);
    let pools = SamplingPools::build(&train);
    for meta in [MetaArchitecture::Siamese, MetaArchitecture::Triplet] {
        assert_eq!(
            epoch_resample(3, 5, &pools, meta, 100).unwrap(),
            epoch_resample(3, 5, &pools, meta, 100).unwrap()
        );
    }

    let enc = EncoderConfig {
        feature_dim: 42,
        token_dim: 8,
        embedding_dim: 4,
        context_pre: 2,
        context_post: 2,
        max_tokens: Some(8),
    };
    let space = FeatureSpace::fit(&a.meetings, a.vectors.clone(), 21, 9).unwrap();
    let features = space.meeting_features(&a.meetings[0]);
    let (encoder, store) = Encoder::init(enc, &mut seed::rng(1)).unwrap();
    let rows = a.meetings[0].summary_worthy();
    let e1 = encoder.embed_meeting(&store, &features, &rows).unwrap();
    let e2 = encoder.embed_meeting(&store, &features, &rows).unwrap();
    assert_eq!(e1, e2);
    assert!(e1.iter().flatten().all(|x| x.is_finite()));
}
