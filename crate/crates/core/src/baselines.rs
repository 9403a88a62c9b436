//! Reference predictors: least-squares polynomial extrapolation of screen
//! coordinates and a state-input MLP iterated forward.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::sqrt;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{axis_angle, euler_xyz, euler_xyz_angles, mat_mul, scale, Vec3, IDENTITY};
use crate::numerics::{affine_forward, BoundParams, ParameterSet, Tape, Tensor, Var};
use crate::sim::{pixel_to_world, world_to_pixel, Trajectory};

/// Per-axis least-squares polynomial over integer time indices.
///
/// Coefficients are stored in the normalized variable `u = (t − center)/span`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    pub degree: usize,
    pub coefficients: [Vec<f64>; 2],
    center: f64,
    span: f64,
}

fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::Invalid("singular normal equations".into()));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    Ok(x)
}

impl PolyFit {
    /// Fits observations taken at `t = 0, 1, …, n−1`.
    pub fn fit(observed: &[[f64; 2]], degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::Invalid(format!("polynomial degree {degree} not in {{1, 2}}")));
        }
        let n = observed.len();
        if n < degree + 1 {
            return Err(Error::Invalid(format!("degree {degree} needs at least {} points, got {n}", degree + 1)));
        }
        let center = (n - 1) as f64 / 2.0;
        let span = center.max(1.0);
        let mut fit = Self { degree, coefficients: [Vec::new(), Vec::new()], center, span };
        let basis: Vec<Vec<f64>> = (0..n).map(|t| fit.basis(t as f64)).collect();
        let k = degree + 1;
        let mut gram = vec![vec![0.0; k]; k];
        for b in &basis {
            for i in 0..k {
                for j in 0..k {
                    gram[i][j] += b[i] * b[j];
                }
            }
        }
        for axis in 0..2 {
            let rhs: Vec<f64> = (0..k).map(|i| basis.iter().zip(observed).map(|(b, y)| b[i] * y[axis]).sum()).collect();
            fit.coefficients[axis] = solve_dense(gram.clone(), rhs)?;
        }
        Ok(fit)
    }

    fn basis(&self, t: f64) -> Vec<f64> {
        let u = (t - self.center) / self.span;
        (0..=self.degree).map(|k| libm::pow(u, k as f64)).collect()
    }

    pub fn eval(&self, t: f64) -> [f64; 2] {
        let b = self.basis(t);
        let dot = |c: &[f64]| c.iter().zip(&b).map(|(c, b)| c * b).sum();
        [dot(&self.coefficients[0]), dot(&self.coefficients[1])]
    }

    /// Largest `|Σ_i r_i u_i^k|` over axes and basis terms; zero at the optimum.
    pub fn normal_residual(&self, observed: &[[f64; 2]]) -> f64 {
        let mut worst: f64 = 0.0;
        for axis in 0..2 {
            for k in 0..=self.degree {
                let s: f64 = observed
                    .iter()
                    .enumerate()
                    .map(|(t, y)| (y[axis] - self.eval(t as f64)[axis]) * self.basis(t as f64)[k])
                    .sum();
                worst = worst.max(s.abs());
            }
        }
        worst
    }
}

/// Fits the observed window and evaluates the polynomial at `t = 0..horizon`.
pub fn polyfit_extrapolate(observed: &[[f64; 2]], degree: usize, horizon: usize) -> Result<Vec<[f64; 2]>> {
    let fit = PolyFit::fit(observed, degree)?;
    Ok((0..horizon).map(|t| fit.eval(t as f64)).collect())
}

/// Number of past states the state MLP conditions on.
pub const STATE_CONTEXT: usize = 4;
const VELOCITY_SCALE: f64 = 1.0;
const ANGULAR_SCALE: f64 = 50.0;
const DELTA_SCALE: f64 = 0.1;

/// Physical state fed to the state MLP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    /// Continuous pixel coordinates.
    pub position: [f64; 2],
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
    /// Intrinsic xyz Euler angles of the ball orientation.
    pub euler: Vec3,
    pub a: f64,
    pub gamma: f64,
}

impl StateVector {
    /// States from per-frame ground truth. Orientation is integrated from the
    /// angular velocities, starting from identity at the first record.
    pub fn from_records(
        positions: &[[f64; 2]],
        velocities: &[Vec3],
        angular_velocities: &[Vec3],
        a: f64,
        gamma: f64,
        frame_dt: f64,
    ) -> Result<Vec<Self>> {
        let n = positions.len();
        if velocities.len() != n || angular_velocities.len() != n {
            return Err(Error::Invalid("state records differ in length".into()));
        }
        let mut orientation = IDENTITY;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                orientation = mat_mul(&axis_angle(scale(angular_velocities[i], frame_dt)), &orientation);
            }
            out.push(StateVector {
                position: positions[i],
                velocity: velocities[i],
                angular_velocity: angular_velocities[i],
                euler: euler_xyz_angles(&orientation),
                a,
                gamma,
            });
        }
        Ok(out)
    }

    /// States for every frame of a simulated trajectory.
    pub fn from_trajectory(traj: &Trajectory, resolution: usize, half_extent: f64, frame_dt: f64) -> Result<Vec<Self>> {
        Self::from_records(
            &traj.pixel_positions(resolution, half_extent),
            &traj.velocities,
            &traj.angular_velocities,
            traj.geometry.a,
            traj.geometry.gamma,
            frame_dt,
        )
    }
}

/// Shape and scaling of the state MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMlpConfig {
    /// Also consume and predict angular velocity and orientation.
    pub plus: bool,
    pub hidden: [usize; 2],
    pub resolution: usize,
    pub half_extent: f64,
    /// Seconds between consecutive states.
    pub frame_dt: f64,
}

impl StateMlpConfig {
    pub fn new(plus: bool, resolution: usize, half_extent: f64) -> Self {
        Self { plus, hidden: [128, 128], resolution, half_extent, frame_dt: 1.0 / 40.0 }
    }

    fn per_state(&self) -> usize {
        if self.plus {
            11
        } else {
            5
        }
    }

    pub fn input_len(&self) -> usize {
        STATE_CONTEXT * self.per_state() + 2
    }

    /// `Δv` (3) or `Δv, Δω` (6).
    pub fn output_len(&self) -> usize {
        if self.plus {
            6
        } else {
            3
        }
    }

    pub fn parameter_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let [h0, h1] = self.hidden;
        vec![
            ("mlp.0.w", vec![self.input_len(), h0]),
            ("mlp.0.b", vec![h0]),
            ("mlp.1.w", vec![h0, h1]),
            ("mlp.1.b", vec![h1]),
            ("mlp.out.w", vec![h1, self.output_len()]),
            ("mlp.out.b", vec![self.output_len()]),
        ]
    }
}

/// He-initialized hidden layers and a zero output layer (`Δ = 0` at start).
pub fn state_mlp_init<R: Rng>(config: &StateMlpConfig, rng: &mut R) -> Result<ParameterSet> {
    let mut params = ParameterSet::new();
    for (name, shape) in config.parameter_shapes() {
        let std = if name.ends_with(".w") && !name.starts_with("mlp.out") { sqrt(2.0 / shape[0] as f64) } else { 0.0 };
        params.insert_gaussian(name, &shape, std, rng)?;
    }
    Ok(params)
}

/// Normalized, flattened context features.
pub fn state_features(context: &[StateVector], config: &StateMlpConfig) -> Result<Tensor> {
    if context.len() != STATE_CONTEXT {
        return Err(Error::Invalid(format!("state MLP needs {STATE_CONTEXT} context states, got {}", context.len())));
    }
    let w = config.resolution as f64;
    let mut f = Vec::with_capacity(config.input_len());
    for s in context {
        f.extend(s.position.iter().map(|p| 2.0 * p / w - 1.0));
        f.extend(s.velocity.iter().map(|v| v / VELOCITY_SCALE));
        if config.plus {
            f.extend(s.angular_velocity.iter().map(|v| v / ANGULAR_SCALE));
            f.extend(s.euler.iter().map(|e| e / PI));
        }
    }
    let last = context[STATE_CONTEXT - 1];
    f.push(last.a);
    f.push(last.gamma / PI);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state features"));
    }
    Ok(Tensor::vector(f))
}

/// Records the MLP on a tape; the output is the normalized `Δ`.
pub fn record_state_mlp(tape: &mut Tape, bound: &BoundParams, features: Var) -> Result<Var> {
    let h = tape.affine(features, bound.var("mlp.0.w")?, Some(bound.var("mlp.0.b")?))?;
    let h = tape.relu(h)?;
    let h = tape.affine(h, bound.var("mlp.1.w")?, Some(bound.var("mlp.1.b")?))?;
    let h = tape.relu(h)?;
    tape.affine(h, bound.var("mlp.out.w")?, Some(bound.var("mlp.out.b")?))
}

fn param<'a>(params: &'a ParameterSet, name: &str) -> Result<&'a Tensor> {
    params.get(name).ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))
}

fn mlp_forward(params: &ParameterSet, features: &Tensor) -> Result<Tensor> {
    let mut h = features.clone();
    for layer in ["mlp.0", "mlp.1"] {
        h = affine_forward(&h, param(params, &format!("{layer}.w"))?, Some(param(params, &format!("{layer}.b"))?))?;
        for v in h.data_mut() {
            *v = v.max(0.0);
        }
    }
    affine_forward(&h, param(params, "mlp.out.w")?, Some(param(params, "mlp.out.b")?))
}

/// Predicts the next velocity (and angular velocity for `plus`).
pub fn state_mlp_step(
    context: &[StateVector],
    params: &ParameterSet,
    config: &StateMlpConfig,
) -> Result<(Vec3, Option<Vec3>)> {
    let out = mlp_forward(params, &state_features(context, config)?)?;
    let d = out.data();
    if d.len() != config.output_len() {
        return Err(Error::Invalid(format!("MLP emits {} values, expected {}", d.len(), config.output_len())));
    }
    let last = context[STATE_CONTEXT - 1];
    let dv = DELTA_SCALE * VELOCITY_SCALE;
    let v = [last.velocity[0] + dv * d[0], last.velocity[1] + dv * d[1], last.velocity[2] + dv * d[2]];
    let w = config.plus.then(|| {
        let dw = DELTA_SCALE * ANGULAR_SCALE;
        [
            last.angular_velocity[0] + dw * d[3],
            last.angular_velocity[1] + dw * d[4],
            last.angular_velocity[2] + dw * d[5],
        ]
    });
    if !(v.iter().all(|x| x.is_finite()) && w.is_none_or(|w| w.iter().all(|x| x.is_finite()))) {
        return Err(Error::NonFinite("state MLP step"));
    }
    Ok((v, w))
}

/// Echoes the context, then iterates the MLP with Euler integration in world
/// space; returns `horizon` states.
pub fn state_mlp_rollout(
    context: &[StateVector],
    params: &ParameterSet,
    config: &StateMlpConfig,
    horizon: usize,
) -> Result<Vec<StateVector>> {
    if horizon == 0 {
        return Err(Error::Invalid("rollout horizon must be at least 1".into()));
    }
    if context.len() != STATE_CONTEXT {
        return Err(Error::Invalid(format!("state MLP needs {STATE_CONTEXT} context states, got {}", context.len())));
    }
    let mut out: Vec<StateVector> = context.iter().take(horizon).copied().collect();
    while out.len() < horizon {
        let ctx = &out[out.len() - STATE_CONTEXT..];
        let (v, w) = state_mlp_step(ctx, params, config)?;
        let last = ctx[STATE_CONTEXT - 1];
        let world = pixel_to_world(last.position, config.resolution, config.half_extent);
        let world = [world[0] + v[0] * config.frame_dt, world[1] + v[1] * config.frame_dt];
        let mut next = last;
        next.position = world_to_pixel(world, config.resolution, config.half_extent);
        next.velocity = v;
        if let Some(w) = w {
            next.angular_velocity = w;
            let r = mat_mul(&axis_angle(scale(w, config.frame_dt)), &euler_xyz(last.euler));
            next.euler = euler_xyz_angles(&r);
        }
        out.push(next);
    }
    Ok(out)
}

/// One teacher-forced training example: four states and the state that follows.
#[derive(Debug, Clone, Copy)]
pub struct StateTransition<'a> {
    pub context: &'a [StateVector],
    pub next: &'a StateVector,
}

fn normalized_delta(t: &StateTransition<'_>, config: &StateMlpConfig) -> Tensor {
    let last = t.context[STATE_CONTEXT - 1];
    let dv = DELTA_SCALE * VELOCITY_SCALE;
    let mut d: Vec<f64> = (0..3).map(|i| (t.next.velocity[i] - last.velocity[i]) / dv).collect();
    if config.plus {
        let dw = DELTA_SCALE * ANGULAR_SCALE;
        d.extend((0..3).map(|i| (t.next.angular_velocity[i] - last.angular_velocity[i]) / dw));
    }
    Tensor::vector(d)
}

/// Records `(1/N) Σ ‖Δ̂ − Δ‖²` in normalized units.
pub fn record_state_mlp_loss(
    tape: &mut Tape,
    bound: &BoundParams,
    config: &StateMlpConfig,
    batch: &[StateTransition<'_>],
) -> Result<Var> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty state MLP batch".into()));
    }
    let mut acc: Option<Var> = None;
    for t in batch {
        let x = tape.constant(state_features(t.context, config)?);
        let y = record_state_mlp(tape, bound, x)?;
        let target = tape.constant(normalized_delta(t, config));
        let d = tape.sub(y, target)?;
        let sq = tape.mul(d, d)?;
        let s = tape.sum(sq)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    tape.scale(acc.expect("non-empty batch"), 1.0 / batch.len() as f64)
}

/// Mean one-step loss and its parameter gradients.
pub fn state_mlp_loss_and_gradients(
    params: &ParameterSet,
    config: &StateMlpConfig,
    batch: &[StateTransition<'_>],
) -> Result<(f64, ParameterSet)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = record_state_mlp_loss(&mut tape, &bound, config, batch)?;
    let value = tape.value(loss).data()[0];
    let grads = tape.backward(loss)?;
    Ok((value, bound.gradients(&tape, &grads)))
}
