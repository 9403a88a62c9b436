use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{covariance_entries, gaussian_nll_2d};
use crate::numerics::{affine_forward, conv2d_forward, Activation, BoundParams, ParameterSet, Tape, Tensor, Var};
use crate::render::Image;

/// Latent state `h = (s, p)` as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub s: Tensor,
    pub p: Vec<f64>,
}

/// Bivariate Gaussian over the pixel position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief {
    pub mean: [f64; 2],
    pub eigenvalues: [f64; 2],
    pub angle: f64,
}

impl GaussianBelief {
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let e = covariance_entries(self.eigenvalues[0], self.eigenvalues[1], self.angle);
        [[e[0], e[1]], [e[2], e[3]]]
    }

    /// Negative log density of `y` in nats.
    pub fn nll(&self, y: [f64; 2]) -> Result<f64> {
        let c = self.covariance();
        gaussian_nll_2d(y, self.mean, &[c[0][0], c[0][1], c[1][0], c[1][1]])
    }
}

/// Decoded output at one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub position: [f64; 2],
    pub belief: Option<GaussianBelief>,
    pub angular_velocity: Option<[f64; 3]>,
}

/// `Σ = R(θ)ᵀ · diag(λ₁, λ₂) · R(θ)` with `λᵢ = scale·sigmoid(βᵢ) + offset`.
pub fn build_covariance(beta1: f64, beta2: f64, theta: f64, scale: f64, offset: f64) -> [[f64; 2]; 2] {
    let act = Activation::ScaledSigmoid { scale, offset };
    let e = covariance_entries(act.apply(beta1), act.apply(beta2), theta);
    [[e[0], e[1]], [e[2], e[3]]]
}

/// Gaussian weights, zero biases, in [`ModelConfig::parameter_shapes`] order.
pub fn init_params<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<ParameterSet> {
    config.validate()?;
    let mut params = ParameterSet::new();
    for (name, shape) in config.parameter_shapes() {
        let std = if name.ends_with(".w") { config.init.std(&shape) } else { 0.0 };
        params.insert_gaussian(&name, &shape, std, rng)?;
    }
    Ok(params)
}

/// Concatenates frames along channels into an `H×W×3n` tensor.
pub fn stack_frames(frames: &[&Image]) -> Result<Tensor> {
    let first = frames.first().ok_or_else(|| Error::Invalid("no frames to stack".into()))?;
    let (w, h) = (first.width, first.height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(Error::Invalid("frames differ in resolution".into()));
    }
    let c = 3 * frames.len();
    let mut data = vec![0.0; w * h * c];
    for (k, f) in frames.iter().enumerate() {
        for px in 0..w * h {
            data[px * c + 3 * k..px * c + 3 * k + 3].copy_from_slice(&f.data[px * 3..px * 3 + 3]);
        }
    }
    Tensor::new(vec![h, w, c], data)
}

/// Stacks frames and subtracts the per-pixel mean of the first `t0` from each.
pub fn encoder_input(frames: &[&Image], t0: usize) -> Result<Tensor> {
    if t0 == 0 || t0 > frames.len() {
        return Err(Error::Invalid(format!("need at least t0 = {t0} context frames, got {}", frames.len())));
    }
    let mut t = stack_frames(frames)?;
    let c = 3 * frames.len();
    let inv = 1.0 / t0 as f64;
    for px in t.data_mut().chunks_exact_mut(c) {
        for ch in 0..3 {
            let mean = (0..t0).map(|k| px[3 * k + ch]).sum::<f64>() * inv;
            for k in 0..frames.len() {
                px[3 * k + ch] -= mean;
            }
        }
    }
    Ok(t)
}

fn check_input(config: &ModelConfig, input: &Tensor) -> Result<()> {
    let expected = [config.resolution, config.resolution, config.input_channels()];
    if input.shape() != expected {
        return Err(Error::Shape {
            op: "encoder",
            detail: format!("{} expects input {expected:?}, got {:?}", config.variant.name(), input.shape()),
        });
    }
    Ok(())
}

fn param<'a>(params: &'a ParameterSet, name: &str) -> Result<&'a Tensor> {
    params.get(name).ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))
}

/// Records the encoder; returns `(s0, p0, final-position head)`.
pub fn record_encoder(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &ModelConfig,
    input: Var,
) -> Result<(Var, Var, Option<Var>)> {
    check_input(config, tape.value(input))?;
    let mut x = input;
    for i in 0..config.encoder_channels.len() {
        let w = bound.var(&format!("enc.{i}.w"))?;
        let b = bound.var(&format!("enc.{i}.b"))?;
        let y = tape.conv2d(x, w, Some(b), 2, 1)?;
        x = tape.relu(y)?;
    }
    let flat = tape.flatten(x)?;
    let p = tape.affine(flat, bound.var("head.p.w")?, Some(bound.var("head.p.b")?))?;
    let fin = if config.variant.is_interpolating() {
        Some(tape.affine(flat, bound.var("head.final.w")?, Some(bound.var("head.final.b")?))?)
    } else {
        None
    };
    Ok((x, p, fin))
}

/// Records `(s, p) ↦ (φ_s(s), p + φ_p(s))`.
pub fn record_transition(tape: &mut Tape, bound: &BoundParams, s: Var, p: Var) -> Result<(Var, Var)> {
    let h = tape.conv2d(s, bound.var("trans.0.w")?, Some(bound.var("trans.0.b")?), 1, 1)?;
    let h = tape.relu(h)?;
    let s_next = tape.conv2d(h, bound.var("trans.1.w")?, Some(bound.var("trans.1.b")?), 1, 1)?;
    let flat = tape.flatten(s)?;
    let dp = tape.affine(flat, bound.var("trans.p.w")?, Some(bound.var("trans.p.b")?))?;
    let p_next = tape.add(p, dp)?;
    Ok((s_next, p_next))
}

/// Records a rollout and returns `p_t` for `t = 0..horizon`; `p_0` is the encoder output.
pub fn record_rollout(tape: &mut Tape, bound: &BoundParams, s0: Var, p0: Var, horizon: usize) -> Result<Vec<Var>> {
    if horizon == 0 {
        return Err(Error::Invalid("rollout horizon must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(horizon);
    let (mut s, mut p) = (s0, p0);
    out.push(p);
    for _ in 1..horizon {
        (s, p) = record_transition(tape, bound, s, p)?;
        out.push(p);
    }
    Ok(out)
}

/// Supervision for one sequence. `positions.len()` is the horizon.
#[derive(Debug, Clone, Copy)]
pub struct SequenceTargets<'a> {
    /// Pixel positions for `t = 0..T`.
    pub positions: &'a [[f64; 2]],
    /// Angular velocities for `t = 0..T`, required by the `++` variants.
    pub angular: Option<&'a [[f64; 3]]>,
}

/// Loss nodes recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct TapeLoss {
    pub total: Var,
    pub position: Option<Var>,
    pub nll: Option<Var>,
    pub regularizer: Option<Var>,
    pub angular: Option<Var>,
    pub final_head: Option<Var>,
}

fn squared_distance(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    let t = tape.constant(Tensor::vector(target.to_vec()));
    let d = tape.sub(pred, t)?;
    let sq = tape.mul(d, d)?;
    tape.sum(sq)
}

fn accumulate(tape: &mut Tape, acc: Option<Var>, term: Var) -> Result<Option<Var>> {
    Ok(Some(match acc {
        Some(a) => tape.add(a, term)?,
        None => term,
    }))
}

/// Records the variant's training objective over a rollout.
///
/// * PhysNet / InterpNet: `(1/T) Σ ‖μ_t − y_t‖²` (InterpNet adds `‖final − y_{T−1}‖²`).
/// * ProbNet: `(1/T) Σ −log N(y_t; μ_t, Σ_t) + λ Σ_t det Σ_t`.
/// * `++`: plus `(1/T) Σ ‖ω̂_t − ω_t‖²`.
pub fn record_loss(
    tape: &mut Tape,
    config: &ModelConfig,
    ps: &[Var],
    final_head: Option<Var>,
    targets: &SequenceTargets<'_>,
) -> Result<TapeLoss> {
    let variant = config.variant;
    let horizon = ps.len();
    if targets.positions.len() != horizon {
        return Err(Error::Invalid(format!(
            "{} rollout steps but {} target positions",
            horizon,
            targets.positions.len()
        )));
    }
    let inv_t = 1.0 / horizon as f64;
    let mut loss = TapeLoss { total: ps[0], position: None, nll: None, regularizer: None, angular: None, final_head: None };

    if variant.is_probabilistic() {
        let (mut nll, mut det) = (None, None);
        for (&p, y) in ps.iter().zip(targets.positions) {
            let mu = tape.slice(p, 0, 2)?;
            let beta = tape.slice(p, 2, 2)?;
            let lam = tape.scaled_sigmoid(beta, config.eigen_scale, config.eigen_offset)?;
            let theta = tape.slice(p, 4, 1)?;
            let cov = tape.covariance(lam, theta)?;
            let n = tape.gaussian_nll(mu, cov, *y)?;
            let d = tape.det2(cov)?;
            nll = accumulate(tape, nll, n)?;
            det = accumulate(tape, det, d)?;
        }
        let nll = tape.scale(nll.expect("horizon ≥ 1"), inv_t)?;
        let reg = tape.scale(det.expect("horizon ≥ 1"), config.det_weight)?;
        loss.nll = Some(nll);
        loss.regularizer = Some(reg);
        loss.total = tape.add(nll, reg)?;
    } else {
        let mut sum = None;
        for (&p, y) in ps.iter().zip(targets.positions) {
            let mu = tape.slice(p, 0, 2)?;
            let d = squared_distance(tape, mu, y)?;
            sum = accumulate(tape, sum, d)?;
        }
        let pos = tape.scale(sum.expect("horizon ≥ 1"), inv_t)?;
        loss.position = Some(pos);
        loss.total = pos;
    }

    if let Some(off) = variant.angular_offset() {
        let omegas = targets
            .angular
            .ok_or_else(|| Error::Invalid(format!("{} needs angular-velocity targets", variant.name())))?;
        if omegas.len() != horizon {
            return Err(Error::Invalid("angular targets do not match the horizon".into()));
        }
        let mut sum = None;
        for (&p, w) in ps.iter().zip(omegas) {
            let wh = tape.slice(p, off, 3)?;
            let d = squared_distance(tape, wh, w)?;
            sum = accumulate(tape, sum, d)?;
        }
        let ang = tape.scale(sum.expect("horizon ≥ 1"), inv_t)?;
        loss.angular = Some(ang);
        loss.total = tape.add(loss.total, ang)?;
    }

    if variant.is_interpolating() {
        let head = final_head.ok_or_else(|| Error::Invalid("interpnet needs its final-position head".into()))?;
        let d = squared_distance(tape, head, &targets.positions[horizon - 1])?;
        loss.final_head = Some(d);
        loss.total = tape.add(loss.total, d)?;
    }
    Ok(loss)
}

/// Scalar values of every loss component; absent components are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingLoss {
    pub total: f64,
    pub position: f64,
    pub nll: f64,
    pub regularizer: f64,
    pub angular: f64,
    pub final_head: f64,
}

/// Forward + backward for one sequence: loss components and parameter gradients.
pub fn loss_and_gradients(
    params: &ParameterSet,
    config: &ModelConfig,
    input: &Tensor,
    targets: &SequenceTargets<'_>,
) -> Result<(TrainingLoss, ParameterSet)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x = tape.constant(input.clone());
    let (s0, p0, fin) = record_encoder(&mut tape, &bound, config, x)?;
    let ps = record_rollout(&mut tape, &bound, s0, p0, targets.positions.len())?;
    let loss = record_loss(&mut tape, config, &ps, fin, targets)?;
    let val = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).data()[0]);
    let report = TrainingLoss {
        total: tape.value(loss.total).data()[0],
        position: val(loss.position),
        nll: val(loss.nll),
        regularizer: val(loss.regularizer),
        angular: val(loss.angular),
        final_head: val(loss.final_head),
    };
    let grads = tape.backward(loss.total)?;
    Ok((report, bound.gradients(&tape, &grads)))
}

fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

fn encode_tensor(input: &Tensor, params: &ParameterSet, config: &ModelConfig) -> Result<(LatentState, Option<[f64; 2]>)> {
    check_input(config, input)?;
    let mut x = input.clone();
    for i in 0..config.encoder_channels.len() {
        let w = param(params, &format!("enc.{i}.w"))?;
        let b = param(params, &format!("enc.{i}.b"))?;
        x = conv2d_forward(&x, w, Some(b), 2, 1)?;
        relu_in_place(&mut x);
    }
    let flat = x.clone().reshape(&[x.len()])?;
    let p = affine_forward(&flat, param(params, "head.p.w")?, Some(param(params, "head.p.b")?))?;
    let fin = if config.variant.is_interpolating() {
        let f = affine_forward(&flat, param(params, "head.final.w")?, Some(param(params, "head.final.b")?))?;
        Some([f.data()[0], f.data()[1]])
    } else {
        None
    };
    if !(x.is_finite() && p.is_finite()) {
        return Err(Error::NonFinite("encoder"));
    }
    Ok((LatentState { s: x, p: p.into_data() }, fin))
}

/// Encodes `T0` context frames (plus the final frame for InterpNet).
pub fn encode_frames(
    frames: &[&Image],
    params: &ParameterSet,
    config: &ModelConfig,
) -> Result<(LatentState, Option<[f64; 2]>)> {
    let expected = config.variant.input_frames(config.t0);
    if frames.len() != expected {
        return Err(Error::Invalid(format!(
            "{} expects {expected} frames ({} channels), got {}",
            config.variant.name(),
            3 * expected,
            frames.len()
        )));
    }
    encode_tensor(&encoder_input(frames, config.t0)?, params, config)
}

/// InterpNet encoding: context frames followed by the frame at `t = T−1`.
pub fn interp_encode(
    context: &[&Image],
    final_frame: &Image,
    params: &ParameterSet,
    config: &ModelConfig,
) -> Result<(LatentState, [f64; 2])> {
    if !config.variant.is_interpolating() {
        return Err(Error::Invalid("interp_encode requires the interpnet variant".into()));
    }
    let mut frames: Vec<&Image> = context.to_vec();
    frames.push(final_frame);
    let (h, fin) = encode_frames(&frames, params, config)?;
    Ok((h, fin.expect("interpnet has a final head")))
}

/// One plain-value transition step.
pub fn transition_step(h: &LatentState, params: &ParameterSet, config: &ModelConfig) -> Result<LatentState> {
    if h.p.len() != config.variant.state_len() {
        return Err(Error::Invalid(format!("p has {} entries, expected {}", h.p.len(), config.variant.state_len())));
    }
    let mut hidden = conv2d_forward(&h.s, param(params, "trans.0.w")?, Some(param(params, "trans.0.b")?), 1, 1)?;
    relu_in_place(&mut hidden);
    let s = conv2d_forward(&hidden, param(params, "trans.1.w")?, Some(param(params, "trans.1.b")?), 1, 1)?;
    let flat = h.s.clone().reshape(&[h.s.len()])?;
    let dp = affine_forward(&flat, param(params, "trans.p.w")?, Some(param(params, "trans.p.b")?))?;
    let p: Vec<f64> = h.p.iter().zip(dp.data()).map(|(a, b)| a + b).collect();
    if !(s.is_finite() && p.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("transition"));
    }
    Ok(LatentState { s, p })
}

/// Reads the prediction out of `p`; no learned parameters.
pub fn decode_state(h: &LatentState, config: &ModelConfig) -> Result<Prediction> {
    let v = config.variant;
    let p = &h.p;
    if p.len() != v.state_len() {
        return Err(Error::Invalid(format!("{} layout needs {} entries, got {}", v.name(), v.state_len(), p.len())));
    }
    let belief = v.is_probabilistic().then(|| {
        let act = Activation::ScaledSigmoid { scale: config.eigen_scale, offset: config.eigen_offset };
        GaussianBelief { mean: [p[0], p[1]], eigenvalues: [act.apply(p[2]), act.apply(p[3])], angle: p[4] }
    });
    let angular_velocity = v.angular_offset().map(|o| [p[o], p[o + 1], p[o + 2]]);
    Ok(Prediction { position: [p[0], p[1]], belief, angular_velocity })
}

/// Decodes `h0`, then alternates transition and decode for `horizon − 1` steps.
pub fn rollout(h0: &LatentState, horizon: usize, params: &ParameterSet, config: &ModelConfig) -> Result<Vec<Prediction>> {
    if horizon == 0 {
        return Err(Error::Invalid("rollout horizon must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(horizon);
    let mut h = h0.clone();
    out.push(decode_state(&h, config)?);
    for _ in 1..horizon {
        h = transition_step(&h, params, config)?;
        out.push(decode_state(&h, config)?);
    }
    Ok(out)
}

/// Encodes a stacked input and rolls out `horizon` predictions.
pub fn predict(
    input: &Tensor,
    params: &ParameterSet,
    config: &ModelConfig,
    horizon: usize,
) -> Result<(Vec<Prediction>, Option<[f64; 2]>)> {
    let (h0, fin) = encode_tensor(input, params, config)?;
    Ok((rollout(&h0, horizon, params, config)?, fin))
}
