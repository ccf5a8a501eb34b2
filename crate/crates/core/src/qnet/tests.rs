use super::tensor::Mat;
use super::*;
use crate::env::MarketState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_hyper() -> HyperParams {
    HyperParams {
        feature_dim: 3,
        obs_feature_dim: 2,
        window: 4,
        embed_dim: 4,
        heads: 2,
        layers: 1,
        periods: vec![30],
    }
}

fn random_state(hyper: &HyperParams, seed: u64) -> MarketState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |rows: usize| Mat::from_fn(rows, hyper.window, |_, _| rng.gen_range(-1.0..1.0));
    let seq = fill(hyper.feature_dim);
    let obs = (0..hyper.periods.len()).map(|_| fill(hyper.obs_feature_dim)).collect();
    MarketState { seq, obs, res_flag: 1.0, hold_time: 0.5 }
}

#[test]
fn encoder_output_shape_is_n_by_d() {
    let hyper = tiny_hyper();
    let params = QNetworkParams::init(hyper.clone(), 1).unwrap();
    let state = random_state(&hyper, 2);
    let trace = encode_sequence(&params.seq, &params.pos_enc, &state.seq, hyper.heads).unwrap();
    assert_eq!(trace.output().shape(), (hyper.embed_dim, hyper.window));
    assert_eq!(trace.compressed().shape(), (hyper.embed_dim, 1));
}

#[test]
fn encoder_rejects_wrong_feature_count() {
    let hyper = tiny_hyper();
    let params = QNetworkParams::init(hyper.clone(), 1).unwrap();
    let bad = Mat::zeros(hyper.feature_dim + 1, hyper.window);
    assert!(matches!(
        encode_sequence(&params.seq, &params.pos_enc, &bad, hyper.heads),
        Err(QNetError::ShapeMismatch(_))
    ));
}

#[test]
fn zero_input_with_zero_positions_keeps_tokens_identical() {
    let hyper = tiny_hyper();
    let mut params = QNetworkParams::init(hyper.clone(), 3).unwrap();
    params.pos_enc = Mat::zeros(hyper.embed_dim, hyper.window);
    let seq = Mat::zeros(hyper.feature_dim, hyper.window);
    let trace = encode_sequence(&params.seq, &params.pos_enc, &seq, hyper.heads).unwrap();
    let h1 = trace.output();
    for r in 0..h1.rows() {
        for c in 1..h1.cols() {
            assert!((h1.at(r, c) - h1.at(r, 0)).abs() < 1e-12, "token {c} differs at row {r}");
        }
    }
}

#[test]
fn attention_rows_are_normalized() {
    let hyper = HyperParams { layers: 2, ..tiny_hyper() };
    let params = QNetworkParams::init(hyper.clone(), 4).unwrap();
    let state = random_state(&hyper, 5);
    let trace = encode_sequence(&params.seq, &params.pos_enc, &state.seq, hyper.heads).unwrap();
    let mut seen = 0;
    for probs in trace.attention_probs() {
        for r in 0..probs.rows() {
            let sum: f64 = probs.row(r).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
        seen += 1;
    }
    assert_eq!(seen, hyper.layers * hyper.heads);
}

#[test]
fn compress_bounds_and_zero_weights() {
    let hyper = tiny_hyper();
    let mut params = QNetworkParams::init(hyper.clone(), 6).unwrap();
    let state = random_state(&hyper, 7);
    let trace = encode_sequence(&params.seq, &params.pos_enc, &state.seq, hyper.heads).unwrap();
    assert!(trace.compressed().data().iter().all(|v| v.abs() < 1.0));

    params.seq.w_compress.scale_assign(0.0);
    params.seq.b_compress.scale_assign(0.0);
    let h2 = compress(&params.seq, trace.output());
    assert!(h2.data().iter().all(|v| *v == 0.0));
}

#[test]
fn inject_flags_length_and_flag_sensitivity() {
    let hyper = tiny_hyper();
    let mut params = QNetworkParams::init(hyper.clone(), 8).unwrap();
    let h2 = Mat::from_fn(hyper.embed_dim, 1, |r, _| 0.1 * r as f64);
    let with = inject_flags(&params.w_flags, &params.b_flags, &h2, 1.0, 0.25);
    assert_eq!(with.shape(), (hyper.embed_dim, 1));
    let without = inject_flags(&params.w_flags, &params.b_flags, &h2, 0.0, 0.25);
    assert!(with != without, "distinct flags should change H4 for generic params");

    // Zero the two flag columns: the output ignores the flags entirely.
    let n = hyper.embed_dim;
    for r in 0..n {
        *params.w_flags.at_mut(r, n) = 0.0;
        *params.w_flags.at_mut(r, n + 1) = 0.0;
    }
    let a = inject_flags(&params.w_flags, &params.b_flags, &h2, 1.0, 0.9);
    let b = inject_flags(&params.w_flags, &params.b_flags, &h2, 0.0, 0.0);
    assert_eq!(a.data(), b.data());
}

#[test]
fn fusion_uniform_for_identical_periods() {
    let n = 4;
    let w = Mat::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 });
    let h4 = Mat::from_fn(n, 1, |r, _| 0.3 * (r as f64 + 1.0));
    let o = Mat::from_fn(n, 1, |r, _| 0.5 - 0.2 * r as f64);
    let (fused, weights) = fuse_periods(&w, &h4, &[&o, &o, &o]).unwrap();
    for w in &weights {
        assert!((w - 1.0 / 3.0).abs() < 1e-12);
    }
    for (f, v) in fused.data().iter().zip(o.data()) {
        assert!((f - v).abs() < 1e-12);
    }
}

#[test]
fn fusion_softmax_hand_case() {
    // Identity W, H4 = e1: scores are the first components, ln 2 and 0.
    let n = 2;
    let w = Mat::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 });
    let h4 = Mat::from_vec(n, 1, vec![1.0, 0.0]);
    let o1 = Mat::from_vec(n, 1, vec![std::f64::consts::LN_2, 0.7]);
    let o2 = Mat::from_vec(n, 1, vec![0.0, -0.4]);
    let (fused, weights) = fuse_periods(&w, &h4, &[&o1, &o2]).unwrap();
    assert!((weights[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((weights[1] - 1.0 / 3.0).abs() < 1e-12);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    let expected0 = 2.0 / 3.0 * std::f64::consts::LN_2;
    assert!((fused.at(0, 0) - expected0).abs() < 1e-12);
}

#[test]
fn fusion_rejects_empty_period_set() {
    let w = Mat::zeros(2, 2);
    let h4 = Mat::zeros(2, 1);
    assert!(matches!(fuse_periods(&w, &h4, &[]), Err(QNetError::EmptyPeriodSet)));
}

#[test]
fn q_values_finite_and_deterministic() {
    let hyper = tiny_hyper();
    let params = QNetworkParams::init(hyper.clone(), 9).unwrap();
    let state = random_state(&hyper, 10);
    let a = q_values(&params, &state).unwrap();
    let b = q_values(&params, &state).unwrap();
    assert!(a[0].is_finite() && a[1].is_finite());
    assert_eq!(a, b, "bit-identical re-evaluation");
}

#[test]
fn head_is_linear_and_shift_invariant_in_argmax() {
    let hyper = tiny_hyper();
    let mut params = QNetworkParams::init(hyper.clone(), 11).unwrap();
    let state = random_state(&hyper, 12);
    let q = q_values(&params, &state).unwrap();

    let mut doubled = params.clone();
    doubled.w_head.scale_assign(2.0);
    doubled.b_head.scale_assign(2.0);
    let q2 = q_values(&doubled, &state).unwrap();
    assert!((q2[0] - 2.0 * q[0]).abs() < 1e-12);
    assert!((q2[1] - 2.0 * q[1]).abs() < 1e-12);

    let argmax = |q: [f64; 2]| usize::from(q[1] > q[0]);
    let before = argmax(q);
    *params.b_head.at_mut(0, 0) += 5.0;
    *params.b_head.at_mut(1, 0) += 5.0;
    let shifted = q_values(&params, &state).unwrap();
    assert_eq!(argmax(shifted), before);
}

#[test]
fn permuting_window_columns_changes_q() {
    let hyper = tiny_hyper();
    let params = QNetworkParams::init(hyper.clone(), 13).unwrap();
    let state = random_state(&hyper, 14);
    let mut swapped = state.clone();
    for r in 0..swapped.seq.rows() {
        let a = swapped.seq.at(r, 0);
        let b = swapped.seq.at(r, 3);
        *swapped.seq.at_mut(r, 0) = b;
        *swapped.seq.at_mut(r, 3) = a;
    }
    let q = q_values(&params, &state).unwrap();
    let qp = q_values(&params, &swapped).unwrap();
    assert!((q[0] - qp[0]).abs() > 1e-12 || (q[1] - qp[1]).abs() > 1e-12);
}

#[test]
fn zero_upstream_gradient_gives_zero_grads() {
    let hyper = tiny_hyper();
    let params = QNetworkParams::init(hyper.clone(), 15).unwrap();
    let state = random_state(&hyper, 16);
    let trace = forward(&params, &state).unwrap();
    let mut grads = params.zeros_like();
    backward(&params, &trace, [0.0, 0.0], &mut grads);
    for (name, t) in grads.named_tensors() {
        assert!(t.data().iter().all(|v| *v == 0.0), "nonzero grad in {name}");
    }
}

#[test]
fn masked_action_leaves_other_head_row_untouched() {
    let hyper = tiny_hyper();
    let params = QNetworkParams::init(hyper.clone(), 17).unwrap();
    let state = random_state(&hyper, 18);
    let trace = forward(&params, &state).unwrap();
    let mut grads = params.zeros_like();
    backward(&params, &trace, [1.0, 0.0], &mut grads);
    assert!(grads.w_head.row(1).iter().all(|v| *v == 0.0));
    assert_eq!(grads.b_head.at(1, 0), 0.0);
    assert!(grads.w_head.row(0).iter().any(|v| *v != 0.0));
}

/// Central finite differences over every trainable tensor.
fn gradcheck(hyper: HyperParams, seed: u64, tol: f64) {
    let mut params = QNetworkParams::init(hyper.clone(), seed).unwrap();
    let state = random_state(&hyper, seed.wrapping_add(100));
    let upstream = [0.7, -0.4];

    let trace = forward(&params, &state).unwrap();
    let mut grads = params.zeros_like();
    backward(&params, &trace, upstream, &mut grads);

    let scalar = |p: &QNetworkParams| {
        let q = q_values(p, &state).unwrap();
        upstream[0] * q[0] + upstream[1] * q[1]
    };

    let names: Vec<String> = params.named_tensors().iter().map(|(n, _)| n.clone()).collect();
    let h = 1e-5;
    for (ti, name) in names.iter().enumerate() {
        let len = params.named_tensors()[ti].1.len();
        for j in 0..len {
            let original = params.named_tensors()[ti].1.data()[j];
            params.named_tensors_mut()[ti].1.data_mut()[j] = original + h;
            let up = scalar(&params);
            params.named_tensors_mut()[ti].1.data_mut()[j] = original - h;
            let down = scalar(&params);
            params.named_tensors_mut()[ti].1.data_mut()[j] = original;
            let fd = (up - down) / (2.0 * h);
            let an = grads.named_tensors()[ti].1.data()[j];
            let err = (fd - an).abs() / (fd.abs() + an.abs()).max(1e-8);
            assert!(err <= tol, "{name}[{j}]: analytic {an} vs fd {fd} (rel {err:.2e})");
        }
    }
}

#[test]
fn gradients_match_finite_differences_on_tiny_net() {
    gradcheck(tiny_hyper(), 21, 1e-4);
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let hyper = tiny_hyper();
    let params = QNetworkParams::init(hyper, 22).unwrap();
    let p1 = dir.path().join("a.bin");
    let p2 = dir.path().join("b.bin");
    save_params(&params, &p1).unwrap();
    let loaded = load_params(&p1).unwrap();
    assert_eq!(loaded, params);
    save_params(&loaded, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn checkpoint_surfaces_stored_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    let params = QNetworkParams::init(tiny_hyper(), 23).unwrap();
    let path = dir.path().join("c.bin");
    save_params(&params, &path).unwrap();
    let loaded = load_params(&path).unwrap();
    assert_eq!(loaded.hyper, tiny_hyper());
    let expected = HyperParams { embed_dim: 8, ..tiny_hyper() };
    assert_ne!(loaded.hyper, expected, "config mismatch is detectable by the caller");
}

#[test]
fn checkpoint_truncation_and_magic_errors() {
    let dir = tempfile::tempdir().unwrap();
    let params = QNetworkParams::init(tiny_hyper(), 24).unwrap();
    let path = dir.path().join("d.bin");
    save_params(&params, &path).unwrap();

    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_params(&cut), Err(QNetError::Truncated)));

    let mut wrong = bytes.clone();
    wrong[0] ^= 0xFF;
    let bad = dir.path().join("bad.bin");
    std::fs::write(&bad, &wrong).unwrap();
    assert!(matches!(load_params(&bad), Err(QNetError::Format(_))));

    let mut versioned = bytes;
    versioned[8] = 99;
    let vf = dir.path().join("ver.bin");
    std::fs::write(&vf, &versioned).unwrap();
    assert!(matches!(load_params(&vf), Err(QNetError::VersionMismatch { found: 99, .. })));
}

#[test]
fn bad_hyperparameters_are_rejected() {
    let mut h = tiny_hyper();
    h.embed_dim = 5; // not divisible by heads = 2
    assert!(matches!(QNetworkParams::init(h, 0), Err(QNetError::BadHyper(_))));
    let mut h = tiny_hyper();
    h.periods.clear();
    assert!(matches!(QNetworkParams::init(h, 0), Err(QNetError::EmptyPeriodSet)));
}
