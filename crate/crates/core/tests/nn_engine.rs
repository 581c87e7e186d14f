use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringfl::nn::*;

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_net(widths: &[usize], split: usize, seed: u64) -> (ModelSpec, ParamSet, ParamSet) {
    let spec = ModelSpec::mlp(widths, split).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ParamSet::init(&spec, Segment::Backbone, &mut rng);
    let mut h = ParamSet::init(&spec, Segment::Head, &mut rng);
    // non-zero biases so the bias path is exercised
    for v in b.scalars_mut().chain(h.scalars_mut()) {
        if *v == 0.0 {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    (spec, b, h)
}

/// Independent forward pass written with plain nested loops over the raw
/// weight layout (`inputs × outputs`, row-major).
fn oracle_forward(spec: &ModelSpec, b: &ParamSet, h: &ParamSet, x: &Tensor) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
    for (idx, layer) in spec.layers().iter().enumerate() {
        let p = b.layer(idx).or_else(|| h.layer(idx)).unwrap();
        let w = p.weight.values();
        let bias = p.bias.values();
        rows = rows
            .iter()
            .map(|r| {
                (0..layer.outputs)
                    .map(|o| {
                        let mut z = bias[o];
                        for i in 0..layer.inputs {
                            z += r[i] * w[i * layer.outputs + o];
                        }
                        if layer.activation == Activation::Relu { z.max(0.0) } else { z }
                    })
                    .collect()
            })
            .collect();
    }
    rows
}

#[test]
fn identity_backbone_passes_inputs_through() {
    let layers = vec![LayerSpec::dense(3, 3, Activation::Identity), LayerSpec::dense(3, 2, Activation::Identity)];
    let spec = ModelSpec::new(layers, 1).unwrap();
    let mut b = ParamSet::zeros(&spec, Segment::Backbone);
    for i in 0..3 {
        b.layer_mut(0).unwrap().weight.values_mut()[i * 3 + i] = 1.0;
    }
    let h = ParamSet::zeros(&spec, Segment::Head);
    let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
    let out = forward_split(&spec, &b, &h, &x).unwrap();
    assert_eq!(out.features, x);
}

#[test]
fn zero_parameters_give_zero_logits() {
    let spec = ModelSpec::mlp(&[4, 6, 5, 3], 2).unwrap();
    let b = ParamSet::zeros(&spec, Segment::Backbone);
    let h = ParamSet::zeros(&spec, Segment::Head);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = forward_split(&spec, &b, &h, &random_batch(&mut rng, 7, 4)).unwrap();
    assert!(out.logits.values().iter().all(|&v| v == 0.0));
    assert_eq!(out.logits.shape(), &[7, 3]);
}

#[test]
fn forward_matches_hand_rolled_oracle() {
    let (spec, b, h) = random_net(&[5, 7, 6, 4], 2, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random_batch(&mut rng, 9, 5);
    let out = forward_split(&spec, &b, &h, &x).unwrap();
    let want = oracle_forward(&spec, &b, &h, &x);
    for (i, row) in want.iter().enumerate() {
        for (a, w) in out.logits.row(i).iter().zip(row) {
            assert!((a - w).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_rejects_shape_mismatch() {
    let (spec, b, h) = random_net(&[5, 7, 4], 1, 0);
    let bad = Tensor::zeros(vec![2, 4]);
    assert!(matches!(forward_split(&spec, &b, &h, &bad), Err(NnError::Shape(_))));
    // swapped segments
    assert!(forward_split(&spec, &h, &b, &Tensor::zeros(vec![2, 5])).is_err());
}

#[test]
fn head_only_backward_produces_only_head_entries() {
    let (spec, b, h) = random_net(&[5, 7, 6, 4], 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_batch(&mut rng, 4, 5);
    let fwd = forward_split(&spec, &b, &h, &x).unwrap();
    let dl = Targets::Classes(vec![0, 1, 2, 3]).loss(&fwd.logits).unwrap().dlogits;
    let g = backward_masked(&spec, &b, &h, &x, &dl, Trainable::HeadOnly).unwrap();
    assert!(g.backbone.is_none());
    assert_eq!(g.head.as_ref().unwrap().layer_ids().collect::<Vec<_>>(), vec![2]);
    let g = backward_masked(&spec, &b, &h, &x, &dl, Trainable::BackboneOnly).unwrap();
    assert!(g.head.is_none());
    assert_eq!(g.backbone.unwrap().layer_ids().collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn zero_dlogits_give_zero_gradients() {
    let (spec, b, h) = random_net(&[5, 7, 4], 1, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_batch(&mut rng, 4, 5);
    let g = backward_masked(&spec, &b, &h, &x, &Tensor::zeros(vec![4, 4]), Trainable::Both).unwrap();
    assert!(g.backbone.unwrap().scalars().all(|v| v == 0.0));
    assert!(g.head.unwrap().scalars().all(|v| v == 0.0));
}

#[test]
fn two_layer_gradients_match_finite_differences() {
    let (spec, b, h) = random_net(&[4, 6, 3], 1, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_batch(&mut rng, 5, 4);
    let t = Targets::Classes(vec![0, 2, 1, 1, 0]);
    let err = grad_check(&spec, &b, &h, &x, &t, 1e-5).unwrap();
    assert!(err < 1e-4, "max rel err {err}");
}

#[test]
fn linear_model_gradcheck_is_tight() {
    let layers = vec![LayerSpec::dense(4, 3, Activation::Identity), LayerSpec::dense(3, 2, Activation::Identity)];
    let spec = ModelSpec::new(layers, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = ParamSet::init(&spec, Segment::Backbone, &mut rng);
    let h = ParamSet::init(&spec, Segment::Head, &mut rng);
    let x = random_batch(&mut rng, 6, 4);
    let y = Tensor::matrix(6, 2, (0..12).map(|i| (i % 2) as f64).collect()).unwrap();
    let err = grad_check(&spec, &b, &h, &x, &Targets::Binary(y), 1e-5).unwrap();
    assert!(err < 1e-7, "max rel err {err}");
}

#[test]
fn dead_units_on_zero_input_check_cleanly() {
    let (spec, mut b, h) = random_net(&[3, 4, 2], 1, 6);
    for v in b.layer_mut(0).unwrap().bias.values_mut() {
        *v = -1.0;
    }
    let x = Tensor::zeros(vec![3, 3]);
    let y = Tensor::zeros(vec![3, 2]);
    let err = grad_check(&spec, &b, &h, &x, &Targets::Binary(y), 1e-5).unwrap();
    assert!(err < 1e-8, "max rel err {err}");
}

#[test]
fn relu_nets_pass_gradcheck_over_twenty_seeds() {
    for seed in 0..20 {
        let (spec, b, h) = random_net(&[6, 10, 8, 4], 2, 100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random_batch(&mut rng, 4, 6);
        let t = Targets::Classes((0..4).map(|_| rng.random_range(0..4)).collect());
        let err = grad_check(&spec, &b, &h, &x, &t, 1e-5).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn grad_check_rejects_bad_step() {
    let (spec, b, h) = random_net(&[2, 2, 2], 1, 0);
    let x = Tensor::zeros(vec![1, 2]);
    assert!(grad_check(&spec, &b, &h, &x, &Targets::Classes(vec![0]), 1e-2).is_err());
}

#[test]
fn forward_is_deterministic() {
    let (spec, b, h) = random_net(&[5, 9, 3], 1, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_batch(&mut rng, 6, 5);
    let a = forward_split(&spec, &b, &h, &x).unwrap();
    let c = forward_split(&spec, &b, &h, &x).unwrap();
    assert!(a.logits.values().iter().zip(c.logits.values()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn masked_steps_leave_frozen_segment_bitwise_identical(seed in 0u64..10_000, head_only in any::<bool>()) {
        let (spec, b, h) = random_net(&[4, 5, 3], 1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_batch(&mut rng, 3, 4);
        let t = Targets::Classes(vec![0, 1, 2]);
        let (mut b2, mut h2) = (b.clone(), h.clone());
        let mut sb = OptimizerState::new(OptimizerConfig::adamw(0.1), &b2);
        let mut sh = OptimizerState::new(OptimizerConfig::adamw(0.1), &h2);
        let mode = if head_only { Trainable::HeadOnly } else { Trainable::BackboneOnly };
        for _ in 0..3 {
            let fwd = forward_split(&spec, &b2, &h2, &x).unwrap();
            let dl = t.loss(&fwd.logits).unwrap().dlogits;
            let g = backward_masked(&spec, &b2, &h2, &x, &dl, mode).unwrap();
            if let Some(gh) = g.head { sh.apply(&mut h2, &gh, 0.01).unwrap(); }
            if let Some(gb) = g.backbone { sb.apply(&mut b2, &gb, 0.01).unwrap(); }
        }
        if head_only {
            prop_assert!(b2.bitwise_eq(&b));
            prop_assert!(!h2.bitwise_eq(&h));
        } else {
            prop_assert!(h2.bitwise_eq(&h));
        }
    }

    #[test]
    fn uniform_softmax_loss_is_ln_k(k in 2usize..50, value in -5.0f64..5.0) {
        let t = Tensor::filled(vec![2, k], value);
        let out = softmax_cross_entropy(&t, &[0, k - 1]).unwrap();
        prop_assert!((out.loss - (k as f64).ln()).abs() < 1e-10);
    }

    #[test]
    fn adamw_zero_grad_zero_decay_identity(seed in 0u64..1000, lr in 1e-5f64..1.0) {
        let (_, b, _) = random_net(&[3, 4, 2], 1, seed);
        let st = OptimizerState::new(OptimizerConfig::adamw(0.0), &b);
        let (p, _) = adamw_step(&b, &b.zeros_like(), &st, lr).unwrap();
        prop_assert!(p.bitwise_eq(&b));
    }
}
