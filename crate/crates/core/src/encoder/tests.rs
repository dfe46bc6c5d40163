use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::corpus::MeetingFeatures;
use crate::nn::grad_check;
use crate::seed;

fn tiny(pre: usize, post: usize) -> EncoderConfig {
    EncoderConfig {
        feature_dim: 4,
        token_dim: 3,
        embedding_dim: 2,
        context_pre: pre,
        context_post: post,
        max_tokens: None,
    }
}

fn features(lens: &[usize], dim: usize, seed_value: u64) -> MeetingFeatures {
    let mut rng = seed::rng(seed_value);
    MeetingFeatures {
        utterances: lens
            .iter()
            .map(|&n| Tensor::matrix(n, dim, (0..n * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .collect(),
    }
}

#[test]
fn time_decay_matches_closed_form() {
    let p = TimeDecayParams::initial();
    // At initialization every softplus-constrained scalar is 1:
    // β(d) = 1/d + relu(1 - 0.1 d) + 1/(1 + d).
    let expected_raw: Vec<f64> = (1..=4)
        .map(|d| {
            let d = d as f64;
            1.0 / d + (1.0 - 0.1 * d).max(0.0) + 1.0 / (1.0 + d)
        })
        .collect();
    let total: f64 = expected_raw.iter().sum();
    let w = time_decay_weights(&[1, 2, 3, 4], &p);
    for (a, b) in w.iter().zip(&expected_raw) {
        assert!((a - b / (total + DECAY_EPS)).abs() < 1e-12);
    }
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    assert!(w.windows(2).all(|x| x[0] > x[1]));
}

#[test]
fn time_decay_tape_matches_plain() {
    let mut rng = seed::rng(4);
    let raw: [f64; 9] = core::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let p = TimeDecayParams::from_array(raw);
    let offsets = [1, 2, 5, 11];
    let mut g = Graph::new();
    let vars: [Var; 9] = core::array::from_fn(|i| g.constant(Tensor::vector(vec![raw[i]])));
    let v = time_decay_var(&mut g, &offsets, &vars);
    let plain = time_decay_weights(&offsets, &p);
    for (a, b) in g.value(v).data().iter().zip(&plain) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn output_shape_and_determinism() {
    let (enc, store) = Encoder::init(tiny(2, 2), &mut seed::rng(1)).unwrap();
    let f = features(&[3, 2, 4, 1, 2], 4, 2);
    let a = enc.embed(&store, &f, 2).unwrap();
    let b = enc.embed(&store, &f, 2).unwrap();
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
    assert!(a.iter().all(|x| x.is_finite()));
}

#[test]
fn context_is_used() {
    let (enc, store) = Encoder::init(tiny(1, 1), &mut seed::rng(1)).unwrap();
    let f = features(&[3, 2, 4], 4, 2);
    let mut g = features(&[3, 2, 4], 4, 2);
    g.utterances[0] = features(&[3], 4, 77).utterances.remove(0);
    assert_ne!(enc.embed(&store, &f, 1).unwrap(), enc.embed(&store, &g, 1).unwrap());
    // Utterance 2 with a one-step window does not see utterance 0.
    assert_eq!(enc.embed(&store, &f, 2).unwrap(), enc.embed(&store, &g, 2).unwrap());
}

#[test]
fn zero_context_ignores_neighbours() {
    let (enc, store) = Encoder::init(tiny(0, 0), &mut seed::rng(1)).unwrap();
    let f = features(&[3, 2, 4], 4, 2);
    let mut g = f.clone();
    g.utterances[0] = features(&[5], 4, 9).utterances.remove(0);
    assert_eq!(enc.embed(&store, &f, 1).unwrap(), enc.embed(&store, &g, 1).unwrap());
}

#[test]
fn single_neighbour_gets_unit_time_weight() {
    let (enc, store) = Encoder::init(tiny(1, 1), &mut seed::rng(3)).unwrap();
    let f = features(&[3, 2, 4], 4, 5);
    let tr = enc.trace(&store, &f, 1).unwrap();
    assert_eq!(tr.pre.len(), 1);
    assert_eq!(tr.post.len(), 1);
    assert!((tr.pre[0].beta - 1.0).abs() < 1e-7);
    assert!((tr.pre[0].alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(tr.pre[0].alpha.len(), 3);
    assert_eq!(tr.post[0].alpha.len(), 4);
    assert_eq!(tr.positions.len(), 4);
    assert!((tr.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(tr.embedding, enc.embed(&store, &f, 1).unwrap());
}

#[test]
fn windows_clip_at_meeting_edges() {
    let (enc, store) = Encoder::init(tiny(3, 3), &mut seed::rng(3)).unwrap();
    let f = features(&[2, 2, 2, 2], 4, 5);
    let first = enc.trace(&store, &f, 0).unwrap();
    assert!(first.pre.is_empty());
    assert_eq!(first.post.iter().map(|c| c.utterance).collect::<Vec<_>>(), vec![1, 2, 3]);
    let last = enc.trace(&store, &f, 3).unwrap();
    assert_eq!(last.pre.iter().map(|c| c.offset).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(last.post.is_empty());
}

#[test]
fn content_attention_depends_on_current_utterance() {
    let (enc, store) = Encoder::init(tiny(1, 0), &mut seed::rng(8)).unwrap();
    let f = features(&[4, 2], 4, 1);
    let mut g = f.clone();
    g.utterances[1] = features(&[3], 4, 50).utterances.remove(0);
    let a = enc.trace(&store, &f, 1).unwrap().pre[0].alpha.clone();
    let b = enc.trace(&store, &g, 1).unwrap().pre[0].alpha.clone();
    assert_ne!(a, b);
}

#[test]
fn padding_is_transparent() {
    let cfg = tiny(1, 1);
    let (enc, store) = Encoder::init(cfg, &mut seed::rng(2)).unwrap();
    let padded = Encoder::bind(
        EncoderConfig {
            max_tokens: Some(6),
            ..cfg
        },
        &store,
    )
    .unwrap();
    let f = features(&[3, 2, 4], 4, 2);
    let a = enc.embed(&store, &f, 1).unwrap();
    let b = padded.embed(&store, &f, 1).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn truncation_drops_trailing_tokens() {
    let cfg = EncoderConfig {
        max_tokens: Some(2),
        ..tiny(0, 0)
    };
    let (enc, store) = Encoder::init(cfg, &mut seed::rng(2)).unwrap();
    let f = features(&[4], 4, 3);
    let mut g = f.clone();
    let data = g.utterances[0].data()[..8].to_vec();
    g.utterances[0] = Tensor::matrix(2, 4, data).unwrap();
    assert_eq!(enc.embed(&store, &f, 0).unwrap(), enc.embed(&store, &g, 0).unwrap());
}

#[test]
fn feature_dim_mismatch_is_reported() {
    let (_, store) = Encoder::init(tiny(1, 1), &mut seed::rng(2)).unwrap();
    let err = Encoder::bind(
        EncoderConfig {
            feature_dim: 6,
            ..tiny(1, 1)
        },
        &store,
    )
    .unwrap_err();
    assert_eq!(err, Error::FeatureDim { checkpoint: 4, corpus: 6 });
    let (enc, store) = Encoder::init(tiny(1, 1), &mut seed::rng(2)).unwrap();
    assert!(matches!(
        enc.embed(&store, &features(&[2, 2], 6, 1), 0),
        Err(Error::FeatureDim { .. })
    ));
}

#[test]
fn every_parameter_receives_a_gradient() {
    let (enc, mut store) = Encoder::init(tiny(2, 2), &mut seed::rng(6)).unwrap();
    let f = features(&[2, 3, 2, 2], 4, 6);
    let pass_store = store.clone();
    let mut pass = enc.pass(&pass_store, 0.0, false).unwrap();
    let mut rng = seed::rng(0);
    let e = pass.encode(0, &f, 1, &mut rng).unwrap();
    let loss = pass.graph.sum(e);
    let grads = pass.graph.backward(loss);
    pass.graph.accumulate(&grads, &mut store);
    for id in store.ids() {
        assert!(store.grad(id).is_some(), "{} has no gradient", store.name(id));
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let (enc, mut store) = Encoder::init(tiny(2, 2), &mut seed::rng(11)).unwrap();
    let f = features(&[2, 3, 2, 2, 3, 1], 4, 12);
    let report = grad_check(&mut store, 1e-5, |s| {
        let snapshot = s.clone();
        let mut pass = enc.pass(&snapshot, 0.0, false)?;
        let mut rng = seed::rng(0);
        let a = pass.encode(0, &f, 2, &mut rng)?;
        let b = pass.encode(0, &f, 3, &mut rng)?;
        let d = pass.graph.sub(a, b);
        let sq = pass.graph.mul(d, d);
        let loss = pass.graph.sum(sq);
        let grads = pass.graph.backward(loss);
        pass.graph.accumulate(&grads, s);
        Ok(pass.graph.scalar(loss))
    })
    .unwrap();
    assert!(report.max_rel_err() < 1e-4, "{:?}", report.worst());
}

#[test]
fn dropout_only_in_training() {
    let (enc, store) = Encoder::init(tiny(1, 1), &mut seed::rng(1)).unwrap();
    let f = features(&[3, 3, 3], 4, 2);
    let eval = enc.embed(&store, &f, 1).unwrap();
    let mut pass = enc.pass(&store, 0.5, true).unwrap();
    let v = pass.encode(0, &f, 1, &mut seed::rng(9)).unwrap();
    assert_ne!(pass.graph.value(v).data(), eval.as_slice());
    let mut pass = enc.pass(&store, 0.5, false).unwrap();
    let v = pass.encode(0, &f, 1, &mut seed::rng(9)).unwrap();
    assert_eq!(pass.graph.value(v).data(), eval.as_slice());
    assert!(enc.pass(&store, 1.0, true).is_err());
}

#[test]
fn config_hash_tracks_fields() {
    let a = EncoderConfig::default();
    assert_eq!(a.config_hash(), EncoderConfig::default().config_hash());
    assert_ne!(a.config_hash(), a.with_context(3, 11).config_hash());
    assert!(EncoderConfig { feature_dim: 5, ..a }.validate().is_err());
}
