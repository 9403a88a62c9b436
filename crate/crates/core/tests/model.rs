use bowlnet_core::math::IDENTITY;
use bowlnet_core::model::{
    build_covariance, decode_state, encode_frames, init_params, interp_encode, loss_and_gradients, predict, rollout,
    stack_frames, transition_step, LatentState, ModelConfig, SequenceTargets, Variant, WeightInit,
};
use bowlnet_core::numerics::Tensor;
use bowlnet_core::render::{render_frame, Image, RenderConfig};
use bowlnet_core::sim::{BallState, BowlGeometry};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frames(n: usize, res: usize) -> Vec<Image> {
    let cfg = RenderConfig { resolution: res, ..RenderConfig::default() };
    let geometry = BowlGeometry::new(0.8, 0.2);
    (0..n)
        .map(|i| {
            let ball = BallState {
                center: [0.1 * i as f64, 0.0, 0.04],
                velocity: [0.0; 3],
                orientation: IDENTITY,
                angular_velocity: [0.0; 3],
            };
            render_frame(&geometry, &ball, 0.04, &cfg).quantized()
        })
        .collect()
}

fn small(variant: Variant) -> ModelConfig {
    ModelConfig { encoder_channels: vec![4, 4], transition_hidden: 4, init: WeightInit::Gaussian(0.1), ..ModelConfig::desk(variant, 16) }
}

#[test]
fn stacking_orders_channels_by_frame() {
    let f = frames(2, 8);
    let t = stack_frames(&[&f[0], &f[1]]).unwrap();
    assert_eq!(t.shape(), &[8, 8, 6]);
    for px in 0..64 {
        assert_eq!(&t.data()[px * 6..px * 6 + 3], &f[0].data[px * 3..px * 3 + 3]);
        assert_eq!(&t.data()[px * 6 + 3..px * 6 + 6], &f[1].data[px * 3..px * 3 + 3]);
    }
}

#[test]
fn encoder_rejects_wrong_frame_count() {
    let config = small(Variant::PhysNet);
    let params = init_params(&config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let f = frames(5, 16);
    let refs: Vec<&Image> = f.iter().collect();
    assert!(encode_frames(&refs[..3], &params, &config).is_err());
    assert!(encode_frames(&refs, &params, &config).is_err());
    let (h, fin) = encode_frames(&refs[..4], &params, &config).unwrap();
    assert_eq!(h.p.len(), 2);
    assert!(fin.is_none());
    let bad = Tensor::zeros(&[16, 16, 15]);
    assert!(predict(&bad, &params, &config, 3).is_err());
}

#[test]
fn interpnet_sees_fifteen_channels() {
    let config = small(Variant::InterpNet);
    assert_eq!(config.input_channels(), 15);
    let params = init_params(&config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let f = frames(5, 16);
    let refs: Vec<&Image> = f.iter().collect();
    let (h, fin) = interp_encode(&refs[..4], refs[4], &params, &config).unwrap();
    assert_eq!(h.p.len(), 2);
    assert!(fin.iter().all(|v| v.is_finite()));
    assert!(interp_encode(&refs[..4], refs[4], &params, &small(Variant::PhysNet)).is_err());
}

#[test]
fn decode_layouts() {
    let s = Tensor::zeros(&[1, 1, 1]);
    for variant in Variant::ALL {
        let config = small(variant);
        let p: Vec<f64> = (0..variant.state_len()).map(|i| i as f64).collect();
        let pred = decode_state(&LatentState { s: s.clone(), p }, &config).unwrap();
        assert_eq!(pred.position, [0.0, 1.0]);
        assert_eq!(pred.belief.is_some(), variant.is_probabilistic());
        assert_eq!(pred.angular_velocity.is_some(), variant.predicts_angular());
        match variant {
            Variant::PhysNetPlus => assert_eq!(pred.angular_velocity, Some([2.0, 3.0, 4.0])),
            Variant::ProbNetPlus => assert_eq!(pred.angular_velocity, Some([5.0, 6.0, 7.0])),
            _ => {}
        }
        let wrong = LatentState { s: s.clone(), p: vec![0.0; variant.state_len() + 1] };
        assert!(decode_state(&wrong, &config).is_err());
    }
}

#[test]
fn covariance_examples() {
    let c = build_covariance(0.0, 0.0, 0.0, 99.99, 0.01);
    assert!((c[0][0] - 50.005).abs() < 1e-12 && (c[1][1] - 50.005).abs() < 1e-12);
    assert!(c[0][1].abs() < 1e-12);
    let a = build_covariance(1.3, -0.4, 0.0, 99.99, 0.01);
    let b = build_covariance(-0.4, 1.3, std::f64::consts::FRAC_PI_2, 99.99, 0.01);
    for i in 0..2 {
        for j in 0..2 {
            assert!((a[i][j] - b[i][j]).abs() < 1e-9);
        }
    }
}

#[test]
fn rollout_prefix_is_consistent() {
    let config = small(Variant::ProbNetPlus);
    let params = init_params(&config, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let f = frames(4, 16);
    let refs: Vec<&Image> = f.iter().collect();
    let (h0, _) = encode_frames(&refs, &params, &config).unwrap();
    let long = rollout(&h0, 40, &params, &config).unwrap();
    let short = rollout(&h0, 20, &params, &config).unwrap();
    assert_eq!(&long[..20], &short[..]);
    let h1 = transition_step(&h0, &params, &config).unwrap();
    assert_eq!(h1.s.shape(), h0.s.shape());
    assert_eq!(decode_state(&h1, &config).unwrap(), long[1]);
    assert!(rollout(&h0, 0, &params, &config).is_err());
}

#[test]
fn tape_and_plain_paths_agree() {
    for variant in Variant::ALL {
        let config = small(variant);
        let params = init_params(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let f = frames(config.variant.input_frames(4), 16);
        let refs: Vec<&Image> = f.iter().collect();
        let input = stack_frames(&refs).unwrap();
        let (preds, _) = predict(&input, &params, &config, 5).unwrap();
        let positions: Vec<[f64; 2]> = preds.iter().map(|p| p.position).collect();
        let omegas: Vec<[f64; 3]> = preds.iter().map(|p| p.angular_velocity.unwrap_or([0.0; 3])).collect();
        let targets = SequenceTargets { positions: &positions, angular: Some(&omegas) };
        let (loss, grads) = loss_and_gradients(&params, &config, &input, &targets).unwrap();
        assert!(grads.same_layout(&params));
        if !variant.is_probabilistic() {
            assert!(loss.position.abs() < 1e-20, "{}: {}", variant.name(), loss.position);
            assert!(loss.angular.abs() < 1e-20);
        } else {
            let nll: f64 = preds.iter().zip(&positions).map(|(p, y)| p.belief.unwrap().nll(*y).unwrap()).sum::<f64>() / 5.0;
            assert!((loss.nll - nll).abs() < 1e-9);
        }
    }
}
