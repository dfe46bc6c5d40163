use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::checkpoint::{self, CheckpointHeader};
use super::*;
use crate::seed;

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    uniform(shape, -1.0, 1.0, rng)
}

#[test]
fn dense_zero_input_tanh_is_zero() {
    let x = Tensor::zeros(&[3, 4]);
    let w = random(&[4, 5], &mut seed::rng(1));
    let y = dense(&x, &w, &Tensor::zeros(&[5]), Activation::Tanh).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn dense_identity() {
    let y = dense(&Tensor::eye(2), &Tensor::eye(2), &Tensor::zeros(&[2]), Activation::Linear).unwrap();
    assert_eq!(y, Tensor::eye(2));
}

#[test]
fn dense_shape_mismatch_is_error() {
    let err = dense(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[4, 2]), &Tensor::zeros(&[2]), Activation::Linear);
    assert!(matches!(err, Err(crate::Error::Shape { .. })));
}

/// Central differences of `f` w.r.t. every entry of `inputs[k]`.
fn numeric_grad(inputs: &[Tensor], k: usize, eps: f64, f: &dyn Fn(&[Tensor]) -> f64) -> Vec<f64> {
    let mut probe = inputs.to_vec();
    (0..inputs[k].len())
        .map(|i| {
            let orig = probe[k].data()[i];
            probe[k].data_mut()[i] = orig + eps;
            let plus = f(&probe);
            probe[k].data_mut()[i] = orig - eps;
            let minus = f(&probe);
            probe[k].data_mut()[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| gradcheck::relative_error(*x, *y))
        .fold(0.0, f64::max)
}

#[test]
fn dense_gradients_match_central_differences() {
    let mut rng = seed::rng(7);
    let inputs = [random(&[3, 4], &mut rng), random(&[4, 2], &mut rng), random(&[2], &mut rng)];
    let proj = random(&[3, 2], &mut rng);
    let loss = |t: &[Tensor]| -> f64 {
        let y = dense(&t[0], &t[1], &t[2], Activation::Tanh).unwrap();
        y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let y = g.dense(vars[0], vars[1], vars[2], Activation::Tanh);
    let p = g.constant(proj.clone());
    let prod = g.mul(y, p);
    let l = g.sum(prod);
    assert!((g.scalar(l) - loss(&inputs)).abs() < 1e-14);
    let grads = g.backward(l);
    for k in 0..3 {
        let numeric = numeric_grad(&inputs, k, 1e-5, &loss);
        let err = max_rel(grads.get(vars[k]).unwrap(), &numeric);
        assert!(err <= 1e-6, "input {k}: rel err {err}");
    }
}

#[test]
fn softmax_uniform_stable_and_exact() {
    let u = softmax(&[0.0, 0.0, 0.0], None).unwrap();
    assert!(u.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    let s = softmax(&[1000.0, 0.0], None).unwrap();
    assert_eq!(s[0], 1.0);
    assert!(s[1] >= 0.0 && s[1] < 1e-300);
    // e^k / (e + e² + e³)
    let p = softmax(&[1.0, 2.0, 3.0], None).unwrap();
    let e = [1f64.exp(), 2f64.exp(), 3f64.exp()];
    let z: f64 = e.iter().sum();
    for (pi, ei) in p.iter().zip(e) {
        assert!((pi - ei / z).abs() < 1e-15);
    }
    assert!((p[0] - 0.09003).abs() < 5e-6 && (p[1] - 0.24473).abs() < 5e-6 && (p[2] - 0.66524).abs() < 5e-6);
}

#[test]
fn softmax_mask_and_empty_support() {
    let p = softmax(&[5.0, 1.0, 2.0], Some(&[false, true, true])).unwrap();
    assert_eq!(p[0], 0.0);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(softmax(&[1.0, 2.0], Some(&[false, false])), Err(crate::Error::EmptyAttentionSupport));
}

#[test]
fn softmax_masked_gradient() {
    let mut rng = seed::rng(4);
    let x = random(&[5], &mut rng);
    let w = random(&[5], &mut rng);
    let mask = [true, false, true, true, false];
    let loss = |t: &[Tensor]| -> f64 {
        softmax(t[0].data(), Some(&mask)).unwrap().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    };
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let s = g.softmax(xv, Some(&mask)).unwrap();
    let wv = g.constant(w.clone());
    let d = g.matmul(s, wv);
    let grads = g.backward(d);
    let numeric = numeric_grad(&[x], 0, 1e-6, &loss);
    assert!(max_rel(grads.get(xv).unwrap(), &numeric) < 1e-6);
    assert_eq!(grads.get(xv).unwrap()[1], 0.0);
}

fn gru_store(input: usize, hidden: usize, zero: bool, rng: &mut impl Rng) -> (ParamStore, GruParams, GruParams) {
    let mut store = ParamStore::new();
    let mut init = |s: &[usize]| if zero { Tensor::zeros(s) } else { random(s, rng) };
    let f = GruParams::register(&mut store, "fwd", input, hidden, &mut init).unwrap();
    let b = GruParams::register(&mut store, "bwd", input, hidden, &mut init).unwrap();
    (store, f, b)
}

fn run_bigru(store: &ParamStore, f: &GruParams, b: &GruParams, seq: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let s = g.constant(seq.clone());
    let h = bigru(&mut g, store, s, f, b, None).unwrap();
    g.value(h).clone()
}

#[test]
fn bigru_zero_parameters_give_zero_annotations() {
    let mut rng = seed::rng(2);
    let (store, f, b) = gru_store(3, 2, true, &mut rng);
    let h = run_bigru(&store, &f, &b, &random(&[4, 3], &mut rng));
    assert_eq!(h.shape(), &[4, 4]);
    assert!(h.data().iter().all(|&v| v == 0.0));
}

#[test]
fn bigru_reversal_swaps_halves() {
    let mut rng = seed::rng(5);
    let (store, f, b) = gru_store(3, 2, false, &mut rng);
    // identical weights for both directions
    let mut tied = store.clone();
    for (fs, bs) in [f.w_update, f.w_reset, f.w_candidate, f.u_update, f.u_reset, f.u_candidate]
        .iter()
        .zip([b.w_update, b.w_reset, b.w_candidate, b.u_update, b.u_reset, b.u_candidate])
    {
        *tied.value_mut(bs) = tied.value(*fs).clone();
    }
    let seq = random(&[4, 3], &mut rng);
    let rows: Vec<Vec<f64>> = (0..4).rev().map(|i| seq.row(i).to_vec()).collect();
    let reversed = Tensor::from_rows(&rows).unwrap();
    let h = run_bigru(&tied, &f, &b, &seq);
    let hr = run_bigru(&tied, &f, &b, &reversed);
    for i in 0..4 {
        let fwd_rev = &hr.row(i)[..2];
        let bwd_orig = &h.row(3 - i)[2..];
        for (x, y) in fwd_rev.iter().zip(bwd_orig) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn bigru_gradients_match_central_differences() {
    let mut rng = seed::rng(9);
    let (mut store, f, b) = gru_store(2, 2, false, &mut rng);
    for id in store.ids().collect::<Vec<_>>() {
        *store.value_mut(id) = random(store.value(id).shape(), &mut rng);
    }
    let seq = random(&[3, 2], &mut rng);
    let report = grad_check(&mut store, 1e-5, |s| {
        let mut g = Graph::new();
        let x = g.constant(seq.clone());
        let h = bigru(&mut g, s, x, &f, &b, None)?;
        let l = g.sum(h);
        let grads = g.backward(l);
        g.accumulate(&grads, s);
        Ok(g.scalar(l))
    })
    .unwrap();
    assert!(report.max_rel_err() <= 1e-5, "{:?}", report.worst());
}

#[test]
fn bigru_every_position_sees_whole_sequence() {
    let mut rng = seed::rng(12);
    let (store, f, b) = gru_store(3, 3, false, &mut rng);
    let seq = random(&[5, 3], &mut rng);
    let base = run_bigru(&store, &f, &b, &seq);
    for j in 0..5 {
        let mut perturbed = seq.clone();
        perturbed.data_mut()[j * 3] += 0.5;
        let h = run_bigru(&store, &f, &b, &perturbed);
        for i in 0..5 {
            let changed = h.row(i).iter().zip(base.row(i)).any(|(a, b)| a != b);
            assert!(changed, "position {i} ignores input {j}");
        }
    }
}

#[test]
fn dropout_modes() {
    let x = Tensor::filled(&[100], 1.0);
    let mut rng = seed::rng(0);
    assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap(), x);
    assert_eq!(dropout(&x, 0.5, &mut rng, false).unwrap(), x);
    assert!(dropout(&x, 1.0, &mut rng, true).is_err());
}

#[test]
fn dropout_preserves_mean() {
    let x = Tensor::filled(&[100_000], 1.0);
    let y = dropout(&x, 0.5, &mut seed::rng(3), true).unwrap();
    let mean = y.data().iter().sum::<f64>() / y.len() as f64;
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
}

fn scalar_store(values: &[f64]) -> ParamStore {
    let mut s = ParamStore::new();
    for (i, v) in values.iter().enumerate() {
        s.insert(&alloc::format!("p{i}"), Tensor::scalar(*v)).unwrap();
    }
    s
}

#[test]
fn adam_zero_gradient_is_identity() {
    let mut store = scalar_store(&[0.3, -1.2]);
    let before = store.clone();
    let mut state = AdamState::new(&store, AdamConfig::default());
    for id in store.ids().collect::<Vec<_>>() {
        store.touch_grad(id);
    }
    adam_step(&mut store, &mut state).unwrap();
    assert!(store.bit_eq(&before));
    assert_eq!(state.step(), 1);
}

#[test]
fn adam_first_step_moves_by_lr() {
    // m̂ = g, v̂ = g², so Δ = −lr·g/(|g| + ε) = −0.001/(1 + 1e-8)
    let mut store = scalar_store(&[0.0]);
    let mut state = AdamState::new(&store, AdamConfig::default());
    store.accumulate_grad(ParamId(0), &[1.0]);
    adam_step(&mut store, &mut state).unwrap();
    let p = store.value(ParamId(0)).data()[0];
    assert!((p - (-0.001 / (1.0 + 1e-8))).abs() < 1e-15);
    assert!(store.grad(ParamId(0)).is_none());
}

#[test]
fn adam_identical_params_identical_updates() {
    let mut store = scalar_store(&[0.5, 0.5]);
    let mut state = AdamState::new(&store, AdamConfig::default());
    for step in 0..5 {
        let g = 0.1 * step as f64 - 0.2;
        store.accumulate_grad(ParamId(0), &[g]);
        store.accumulate_grad(ParamId(1), &[g]);
        adam_step(&mut store, &mut state).unwrap();
    }
    assert_eq!(store.value(ParamId(0)), store.value(ParamId(1)));
}

#[test]
fn adam_missing_gradient_names_parameter() {
    let mut store = scalar_store(&[0.0, 1.0]);
    let mut state = AdamState::new(&store, AdamConfig::default());
    store.accumulate_grad(ParamId(0), &[1.0]);
    assert_eq!(
        adam_step(&mut store, &mut state),
        Err(crate::Error::MissingGradient("p1".into()))
    );
}

#[test]
fn grad_check_quadratic() {
    let mut store = scalar_store(&[3.0]);
    let report = grad_check(&mut store, 1e-5, |s| {
        let w = s.value(ParamId(0)).data()[0];
        s.accumulate_grad(ParamId(0), &[2.0 * w]);
        Ok(w * w)
    })
    .unwrap();
    let p = &report.params[0];
    assert_eq!(p.analytic, 6.0);
    assert!((p.numeric - 6.0).abs() < 1e-9);
    assert!(p.max_rel_err < 1e-9);
}

#[test]
fn grad_check_flags_corrupted_gradient() {
    let mut store = scalar_store(&[3.0]);
    let report = grad_check(&mut store, 1e-5, |s| {
        let w = s.value(ParamId(0)).data()[0];
        s.accumulate_grad(ParamId(0), &[2.0 * 2.0 * w]);
        Ok(w * w)
    })
    .unwrap();
    assert!((report.max_rel_err() - 0.5).abs() < 1e-6);
}

#[test]
fn grad_check_rejects_nondeterministic_closure() {
    let mut store = scalar_store(&[1.0]);
    let mut calls = 0.0;
    let res = grad_check(&mut store, 1e-5, |s| {
        calls += 1.0;
        s.accumulate_grad(ParamId(0), &[1.0]);
        Ok(calls)
    });
    assert_eq!(res.unwrap_err(), crate::Error::NonDeterministic);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = seed::rng(21);
    let mut store = ParamStore::new();
    store.insert("a.w", random(&[3, 2], &mut rng)).unwrap();
    store.insert("b", Tensor::vector(vec![f64::MIN_POSITIVE, -0.0, 1e300])).unwrap();
    let header = CheckpointHeader { config_hash: 0xdead_beef, epoch: 7 };
    let bytes = checkpoint::encode(&store, header);
    let (h, back) = checkpoint::decode(&bytes).unwrap();
    assert_eq!(h, header);
    assert!(back.bit_eq(&store));
    assert_eq!(checkpoint::encode(&back, h), bytes);
    assert!(checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_is_a_distribution(
            v in proptest::collection::vec(-50.0f64..50.0, 1..12),
            mask_bits in proptest::collection::vec(any::<bool>(), 12),
        ) {
            let mut mask: Vec<bool> = mask_bits[..v.len()].to_vec();
            mask[0] = true;
            let p = softmax(&v, Some(&mask)).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (pi, m) in p.iter().zip(&mask) {
                if !m { prop_assert_eq!(*pi, 0.0); }
            }
        }
    }
}
