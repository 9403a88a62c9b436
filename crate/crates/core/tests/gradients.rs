use bowlnet_core::baselines::{record_state_mlp_loss, state_mlp_init, StateMlpConfig, StateTransition, StateVector};
use bowlnet_core::model::{init_params, record_encoder, record_loss, record_rollout, ModelConfig, SequenceTargets, Variant, WeightInit};
use bowlnet_core::numerics::{finite_difference_check, ParameterSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-6;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn params(rng: &mut ChaCha8Rng, entries: &[(&str, &[usize])]) -> ParameterSet {
    let mut p = ParameterSet::new();
    for (name, shape) in entries {
        p.insert(*name, random_tensor(rng, shape)).unwrap();
    }
    p
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 0)] {
        let p = params(&mut rng, &[("x", &[6, 5, 2]), ("k", &[3, 3, 2, 3]), ("b", &[3])]);
        let err = finite_difference_check(&p, H, |t, b| {
            let y = t.conv2d(b.var("x")?, b.var("k")?, Some(b.var("b")?), stride, pad)?;
            let y2 = t.mul(y, y)?;
            t.sum(y2)
        })
        .unwrap();
        assert!(err <= TOL, "stride {stride} pad {pad}: {err}");
    }
}

#[test]
fn affine_and_activations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = params(&mut rng, &[("x", &[7]), ("w", &[7, 4]), ("b", &[4])]);
    let err = finite_difference_check(&p, H, |t, b| {
        let y = t.affine(b.var("x")?, b.var("w")?, Some(b.var("b")?))?;
        let r = t.relu(y)?;
        let s = t.sigmoid(y)?;
        let q = t.scaled_sigmoid(y, 99.99, 0.01)?;
        let a = t.add(r, s)?;
        let m = t.mul(a, q)?;
        let m = t.scale(m, 0.3)?;
        let d = t.sub(m, y)?;
        t.mean(d)
    })
    .unwrap();
    assert!(err <= TOL, "{err}");
}

#[test]
fn shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = params(&mut rng, &[("x", &[2, 3, 4])]);
    let err = finite_difference_check(&p, H, |t, b| {
        let x = b.var("x")?;
        let f = t.flatten(x)?;
        let r = t.reshape(f, &[6, 4])?;
        let r = t.flatten(r)?;
        let s = t.slice(r, 5, 9)?;
        let s2 = t.mul(s, s)?;
        t.sum(s2)
    })
    .unwrap();
    assert!(err <= TOL, "{err}");
}

#[test]
fn gaussian_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..5 {
        let p = params(&mut rng, &[("beta", &[2]), ("theta", &[1]), ("mu", &[2])]);
        let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let err = finite_difference_check(&p, H, |t, b| {
            let lam = t.scaled_sigmoid(b.var("beta")?, 3.0, 0.5)?;
            let cov = t.covariance(lam, b.var("theta")?)?;
            let nll = t.gaussian_nll(b.var("mu")?, cov, y)?;
            let det = t.det2(cov)?;
            let det = t.scale(det, 0.1)?;
            t.add(nll, det)
        })
        .unwrap();
        assert!(err <= TOL, "{err}");
    }
}

fn small_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        encoder_channels: vec![4, 4],
        transition_hidden: 4,
        init: WeightInit::Gaussian(0.3),
        ..ModelConfig::desk(variant, 8)
    }
}

#[test]
fn full_model_losses() {
    let horizon = 4;
    for variant in Variant::ALL {
        let config = small_config(variant);
        let mut rng = ChaCha8Rng::seed_from_u64(10 + variant as u64);
        let mut params = init_params(&config, &mut rng).unwrap();
        for (_, t) in params.iter_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
        }
        let input = random_tensor(&mut rng, &[8, 8, config.input_channels()]).map(|v| 0.5 * (v + 1.0));
        let positions: Vec<[f64; 2]> = (0..horizon).map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)]).collect();
        let omegas: Vec<[f64; 3]> = (0..horizon).map(|_| [rng.random_range(-1.0..1.0); 3]).collect();
        let targets = SequenceTargets { positions: &positions, angular: Some(&omegas) };
        let err = finite_difference_check(&params, H, |t, b| {
            let x = t.constant(input.clone());
            let (s0, p0, fin) = record_encoder(t, b, &config, x)?;
            let ps = record_rollout(t, b, s0, p0, horizon)?;
            Ok(record_loss(t, &config, &ps, fin, &targets)?.total)
        })
        .unwrap();
        assert!(err <= TOL, "{}: {err}", variant.name());
    }
}

#[test]
fn state_mlp_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for plus in [false, true] {
        let mut config = StateMlpConfig::new(plus, 48, 1.1);
        config.hidden = [16, 16];
        let mut params = state_mlp_init(&config, &mut rng).unwrap();
        for v in params.get_mut("mlp.out.w").unwrap().data_mut() {
            *v = rng.random_range(-0.3..0.3);
        }
        let states: Vec<StateVector> = (0..5)
            .map(|_| StateVector {
                position: [rng.random_range(5.0..40.0), rng.random_range(5.0..40.0)],
                velocity: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3)],
                angular_velocity: [rng.random_range(-30.0..30.0); 3],
                euler: [rng.random_range(-1.0..1.0); 3],
                a: 0.7,
                gamma: 0.2,
            })
            .collect();
        let batch = [StateTransition { context: &states[..4], next: &states[4] }];
        let err = finite_difference_check(&params, H, |t, b| record_state_mlp_loss(t, b, &config, &batch)).unwrap();
        assert!(err <= TOL, "plus={plus}: {err}");
    }
}
