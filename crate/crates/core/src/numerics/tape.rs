//! Reverse-mode automatic differentiation over a recorded op list.
//!
//! Every op appends a node holding its forward value, so nodes are
//! topologically ordered by construction and `backward` is a single reverse
//! sweep.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use libm::{cos, log, sin};

use super::ops::{self, sigmoid};
use super::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d { x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize },
    Affine { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Sigmoid(Var),
    ScaledSigmoid { x: Var, scale: f64 },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    Slice { x: Var, start: usize },
    Sum(Var),
    Mean(Var),
    Covariance { lam: Var, theta: Var },
    Det2(Var),
    GaussianNll { mu: Var, cov: Var, target: [f64; 2] },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Computation tape. Build a forward graph with the op methods, then call
/// [`Tape::backward`] on a scalar node.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, true)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, false)
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn push_checked(&mut self, op: Op, value: Tensor, deps: &[Var], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let rg = self.rg(deps);
        Ok(self.push(op, value, rg))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xv = self.value(x);
        let kv = self.value(k);
        let bv = b.map(|b| self.value(b));
        let g = ops::conv_geometry(xv, kv, bv, stride, pad)?;
        let out = ops::conv2d_raw(&g, xv.data(), kv.data(), bv.map(|t| t.data()));
        let value = Tensor::new(vec![g.ho, g.wo, g.cout], out)?;
        let mut deps = vec![x, k];
        deps.extend(b);
        self.push_checked(Op::Conv2d { x, k, b, stride, pad }, value, &deps, "conv2d")
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let bv = b.map(|b| self.value(b));
        let (_, m) = ops::affine_dims(xv, wv, bv)?;
        let value = Tensor::vector(ops::affine_raw(xv.data(), wv.data(), bv.map(|t| t.data()), m));
        let mut deps = vec![x, w];
        deps.extend(b);
        self.push_checked(Op::Affine { x, w, b }, value, &deps, "affine")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|z| z.max(0.0));
        self.push_checked(Op::Relu(x), value, &[x], "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(sigmoid);
        self.push_checked(Op::Sigmoid(x), value, &[x], "sigmoid")
    }

    /// `scale / (1 + e^{-x}) + offset`.
    pub fn scaled_sigmoid(&mut self, x: Var, scale: f64, offset: f64) -> Result<Var> {
        if !(scale > 0.0) {
            return Err(Error::Invalid(alloc::format!("scaled sigmoid needs scale > 0, got {scale}")));
        }
        let value = self.value(x).map(|z| scale * sigmoid(z) + offset);
        self.push_checked(Op::ScaledSigmoid { x, scale }, value, &[x], "scaled_sigmoid")
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(shape_err(name, alloc::format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        self.push_checked(Op::Add(a, b), v, &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push_checked(Op::Sub(a, b), v, &[a, b], "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        self.push_checked(Op::Mul(a, b), v, &[a, b], "mul")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let v = self.value(x).map(|z| z * c);
        self.push_checked(Op::Scale(x, c), v, &[x], "scale")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Reshape(x), v, rg))
    }

    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        self.reshape(x, &[n])
    }

    /// Contiguous sub-vector `[start, start + len)` of the flattened input.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if len == 0 || start + len > xv.len() {
            return Err(Error::OutOfRange { index: start + len, len: xv.len() });
        }
        let v = Tensor::vector(xv.data()[start..start + len].to_vec());
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Slice { x, start }, v, rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push_checked(Op::Sum(x), Tensor::scalar(s), &[x], "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.data().iter().sum::<f64>() / xv.len() as f64;
        self.push_checked(Op::Mean(x), Tensor::scalar(s), &[x], "mean")
    }

    /// `Σ = R(θ)ᵀ · diag(λ₁, λ₂) · R(θ)` from `lam = [λ₁, λ₂]` and a scalar `theta`.
    pub fn covariance(&mut self, lam: Var, theta: Var) -> Result<Var> {
        let (l, t) = (self.value(lam), self.value(theta));
        if l.len() != 2 || t.len() != 1 {
            return Err(shape_err("covariance", "expects two eigenvalues and one angle"));
        }
        let s = covariance_entries(l.data()[0], l.data()[1], t.data()[0]);
        let v = Tensor::new(vec![2, 2], s.to_vec())?;
        self.push_checked(Op::Covariance { lam, theta }, v, &[lam, theta], "covariance")
    }

    pub fn det2(&mut self, m: Var) -> Result<Var> {
        let mv = self.value(m);
        if mv.len() != 4 {
            return Err(shape_err("det2", "expects a 2×2 matrix"));
        }
        let d = mv.data();
        let v = Tensor::scalar(d[0] * d[3] - d[1] * d[2]);
        self.push_checked(Op::Det2(m), v, &[m], "det2")
    }

    /// Negative log density of `target` under `N(mu, cov)` in nats.
    pub fn gaussian_nll(&mut self, mu: Var, cov: Var, target: [f64; 2]) -> Result<Var> {
        let (m, c) = (self.value(mu), self.value(cov));
        if m.len() != 2 || c.len() != 4 {
            return Err(shape_err("gaussian_nll", "expects a 2-vector mean and 2×2 covariance"));
        }
        let mu_v = [m.data()[0], m.data()[1]];
        let nll = gaussian_nll_2d(target, mu_v, c.data())?;
        self.push_checked(Op::GaussianNll { mu, cov, target }, Tensor::scalar(nll), &[mu, cov], "gaussian_nll")
    }

    /// Gradients of the scalar `loss` with respect to every node that requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn like(&self, v: Var, data: Vec<f64>) -> Tensor {
        Tensor::new(self.value(v).shape().to_vec(), data).expect("gradient shape mirrors value shape")
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match *op {
            Op::Leaf => {}
            Op::Conv2d { x, k, b, stride, pad } => {
                let (xv, kv) = (self.value(x), self.value(k));
                let geom = ops::conv_geometry(xv, kv, None, stride, pad).expect("validated in forward");
                let (dx, dk, db) =
                    ops::conv2d_backward_raw(&geom, xv.data(), kv.data(), gd, self.needs(x), self.needs(k));
                if let Some(dx) = dx {
                    self.accum(grads, x, self.like(x, dx));
                }
                if let Some(dk) = dk {
                    self.accum(grads, k, self.like(k, dk));
                }
                if let Some(b) = b {
                    self.accum(grads, b, self.like(b, db));
                }
            }
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(x).data(), self.value(w).data());
                let m = gd.len();
                if self.needs(x) {
                    let dx = (0..xv.len())
                        .map(|i| wv[i * m..(i + 1) * m].iter().zip(gd).map(|(w, g)| w * g).sum())
                        .collect();
                    self.accum(grads, x, self.like(x, dx));
                }
                if self.needs(w) {
                    let mut dw = vec![0.0; wv.len()];
                    for (i, &a) in xv.iter().enumerate() {
                        for (d, &gv) in dw[i * m..(i + 1) * m].iter_mut().zip(gd) {
                            *d = a * gv;
                        }
                    }
                    self.accum(grads, w, self.like(w, dw));
                }
                if let Some(b) = b {
                    self.accum(grads, b, self.like(b, gd.to_vec()));
                }
            }
            Op::Relu(x) => {
                let dx = self.value(x).data().iter().zip(gd).map(|(&z, &g)| if z > 0.0 { g } else { 0.0 }).collect();
                self.accum(grads, x, self.like(x, dx));
            }
            Op::Sigmoid(x) => {
                let dx = out.data().iter().zip(gd).map(|(&s, &g)| g * s * (1.0 - s)).collect();
                self.accum(grads, x, self.like(x, dx));
            }
            Op::ScaledSigmoid { x, scale } => {
                let dx = self
                    .value(x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&z, &g)| {
                        let s = sigmoid(z);
                        g * scale * s * (1.0 - s)
                    })
                    .collect();
                self.accum(grads, x, self.like(x, dx));
            }
            Op::Add(a, b) => {
                self.accum(grads, a, self.like(a, gd.to_vec()));
                self.accum(grads, b, self.like(b, gd.to_vec()));
            }
            Op::Sub(a, b) => {
                self.accum(grads, a, self.like(a, gd.to_vec()));
                self.accum(grads, b, self.like(b, gd.iter().map(|g| -g).collect()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                if self.needs(a) {
                    self.accum(grads, a, self.like(a, bv.iter().zip(gd).map(|(y, g)| y * g).collect()));
                }
                if self.needs(b) {
                    self.accum(grads, b, self.like(b, av.iter().zip(gd).map(|(x, g)| x * g).collect()));
                }
            }
            Op::Scale(x, c) => self.accum(grads, x, self.like(x, gd.iter().map(|g| g * c).collect())),
            Op::Reshape(x) => self.accum(grads, x, self.like(x, gd.to_vec())),
            Op::Slice { x, start } => {
                let mut dx = vec![0.0; self.value(x).len()];
                dx[start..start + gd.len()].copy_from_slice(gd);
                self.accum(grads, x, self.like(x, dx));
            }
            Op::Sum(x) => {
                let n = self.value(x).len();
                self.accum(grads, x, self.like(x, vec![gd[0]; n]));
            }
            Op::Mean(x) => {
                let n = self.value(x).len();
                self.accum(grads, x, self.like(x, vec![gd[0] / n as f64; n]));
            }
            Op::Covariance { lam, theta } => {
                let l = self.value(lam).data();
                let t = self.value(theta).data()[0];
                let (l1, l2) = (l[0], l[1]);
                let (c, s) = (cos(t), sin(t));
                // Σ = [[l1c²+l2s², (l2-l1)sc], [(l2-l1)sc, l1s²+l2c²]]
                let (g11, g12, g21, g22) = (gd[0], gd[1], gd[2], gd[3]);
                let goff = g12 + g21;
                let dl1 = g11 * c * c - goff * s * c + g22 * s * s;
                let dl2 = g11 * s * s + goff * s * c + g22 * c * c;
                let dt = g11 * 2.0 * (l2 - l1) * s * c + goff * (l2 - l1) * (c * c - s * s)
                    + g22 * 2.0 * (l1 - l2) * s * c;
                self.accum(grads, lam, self.like(lam, vec![dl1, dl2]));
                self.accum(grads, theta, self.like(theta, vec![dt]));
            }
            Op::Det2(m) => {
                let d = self.value(m).data();
                let g0 = gd[0];
                self.accum(grads, m, self.like(m, vec![g0 * d[3], -g0 * d[2], -g0 * d[1], g0 * d[0]]));
            }
            Op::GaussianNll { mu, cov, target } => {
                let m = self.value(mu).data();
                let sv = self.value(cov).data();
                let det = sv[0] * sv[3] - sv[1] * sv[2];
                // inverse of [[a, b], [c, d]]
                let inv = [sv[3] / det, -sv[1] / det, -sv[2] / det, sv[0] / det];
                let r = [target[0] - m[0], target[1] - m[1]];
                // u = Σ⁻¹ r, w = Σ⁻ᵀ r
                let u = [inv[0] * r[0] + inv[1] * r[1], inv[2] * r[0] + inv[3] * r[1]];
                let w = [inv[0] * r[0] + inv[2] * r[1], inv[1] * r[0] + inv[3] * r[1]];
                let g0 = gd[0];
                // d/dμ of ½ rᵀΣ⁻¹r = -½(Σ⁻¹ + Σ⁻ᵀ) r
                self.accum(grads, mu, self.like(mu, vec![-0.5 * g0 * (u[0] + w[0]), -0.5 * g0 * (u[1] + w[1])]));
                // d/dΣ_ij = ½ (Σ⁻¹)_ji - ½ w_i u_j
                let dcov = vec![
                    g0 * 0.5 * (inv[0] - w[0] * u[0]),
                    g0 * 0.5 * (inv[2] - w[0] * u[1]),
                    g0 * 0.5 * (inv[1] - w[1] * u[0]),
                    g0 * 0.5 * (inv[3] - w[1] * u[1]),
                ];
                self.accum(grads, cov, self.like(cov, dcov));
            }
        }
    }
}

/// Row-major entries of `R(θ)ᵀ · diag(λ₁, λ₂) · R(θ)` with `R(θ) = [[cos θ, -sin θ], [sin θ, cos θ]]`.
pub(crate) fn covariance_entries(l1: f64, l2: f64, theta: f64) -> [f64; 4] {
    let (c, s) = (cos(theta), sin(theta));
    let off = (l2 - l1) * s * c;
    [l1 * c * c + l2 * s * s, off, off, l1 * s * s + l2 * c * c]
}

/// `ln 2π + ½ ln det Σ + ½ (y-μ)ᵀ Σ⁻¹ (y-μ)`; rejects non-positive-definite `Σ`.
pub(crate) fn gaussian_nll_2d(y: [f64; 2], mu: [f64; 2], cov: &[f64]) -> Result<f64> {
    let det = cov[0] * cov[3] - cov[1] * cov[2];
    if !(det > 0.0 && cov[0] > 0.0) {
        return Err(Error::Invalid(alloc::format!("covariance is not positive definite: {cov:?}")));
    }
    let r = [y[0] - mu[0], y[1] - mu[1]];
    let maha = (cov[3] * r[0] * r[0] - (cov[1] + cov[2]) * r[0] * r[1] + cov[0] * r[1] * r[1]) / det;
    Ok(log(2.0 * PI) + 0.5 * log(det) + 0.5 * maha)
}
