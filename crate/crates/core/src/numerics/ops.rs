//! Raw forward/backward kernels shared by the tape and by plain inference.

use alloc::vec;
use alloc::vec::Vec;
use libm::exp;

use super::Tensor;
use crate::error::{shape_err, Result};

/// Pointwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    Sigmoid,
    /// `scale / (1 + e^{-z}) + offset`, valued in `(offset, scale + offset)`.
    ScaledSigmoid { scale: f64, offset: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::ScaledSigmoid { scale, offset } => scale * sigmoid(z) + offset,
        }
    }

    pub fn forward(self, input: &Tensor) -> Tensor {
        input.map(|z| self.apply(z))
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

/// Spatial output size of a convolution along one axis.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub k: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

pub(crate) fn conv_geometry(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<ConvGeom> {
    let (&[h, w, cin], &[k, k2, kcin, cout]) = (input.shape(), kernels.shape()) else {
        return Err(shape_err(
            "conv2d",
            alloc::format!("expected H×W×C input and k×k×Cin×Cout kernels, got {:?} and {:?}", input.shape(), kernels.shape()),
        ));
    };
    if k != k2 || k % 2 == 0 {
        return Err(shape_err("conv2d", alloc::format!("kernel must be square and odd, got {k}×{k2}")));
    }
    if cin != kcin {
        return Err(shape_err("conv2d", alloc::format!("input has {cin} channels, kernels expect {kcin}")));
    }
    if stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
        return Err(shape_err("conv2d", "kernel larger than padded input or zero stride"));
    }
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(shape_err("conv2d", alloc::format!("bias has {} entries, expected {cout}", b.len())));
        }
    }
    Ok(ConvGeom {
        h,
        w,
        cin,
        k,
        cout,
        stride,
        pad,
        ho: conv_output_size(h, k, stride, pad),
        wo: conv_output_size(w, k, stride, pad),
    })
}

/// Input coordinate for an output coordinate and kernel tap, if in bounds.
#[inline]
fn tap(o: usize, kk: usize, stride: usize, pad: usize, limit: usize) -> Option<usize> {
    let i = (o * stride + kk).checked_sub(pad)?;
    (i < limit).then_some(i)
}

pub(crate) fn conv2d_raw(g: &ConvGeom, x: &[f64], kern: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; g.ho * g.wo * g.cout];
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let o = &mut out[(oy * g.wo + ox) * g.cout..][..g.cout];
            if let Some(b) = bias {
                o.copy_from_slice(b);
            }
            for ky in 0..g.k {
                let Some(iy) = tap(oy, ky, g.stride, g.pad, g.h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = tap(ox, kx, g.stride, g.pad, g.w) else { continue };
                    let inp = &x[(iy * g.w + ix) * g.cin..][..g.cin];
                    let kb = &kern[(ky * g.k + kx) * g.cin * g.cout..][..g.cin * g.cout];
                    for (ci, &a) in inp.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let row = &kb[ci * g.cout..][..g.cout];
                        for (oc, &kv) in o.iter_mut().zip(row) {
                            *oc += a * kv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of a convolution: `(d input, d kernels, d bias)`.
pub(crate) fn conv2d_backward_raw(
    g: &ConvGeom,
    x: &[f64],
    kern: &[f64],
    dout: &[f64],
    need_dx: bool,
    need_dk: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) {
    let mut dx = need_dx.then(|| vec![0.0; x.len()]);
    let mut dk = need_dk.then(|| vec![0.0; kern.len()]);
    let mut db = vec![0.0; g.cout];
    for oy in 0..g.ho {
        for ox in 0..g.wo {
            let d = &dout[(oy * g.wo + ox) * g.cout..][..g.cout];
            for (b, &dv) in db.iter_mut().zip(d) {
                *b += dv;
            }
            if d.iter().all(|&v| v == 0.0) {
                continue;
            }
            for ky in 0..g.k {
                let Some(iy) = tap(oy, ky, g.stride, g.pad, g.h) else { continue };
                for kx in 0..g.k {
                    let Some(ix) = tap(ox, kx, g.stride, g.pad, g.w) else { continue };
                    let base_in = (iy * g.w + ix) * g.cin;
                    let base_k = (ky * g.k + kx) * g.cin * g.cout;
                    for ci in 0..g.cin {
                        let krow = base_k + ci * g.cout;
                        if let Some(dk) = dk.as_mut() {
                            let a = x[base_in + ci];
                            if a != 0.0 {
                                for (kv, &dv) in dk[krow..krow + g.cout].iter_mut().zip(d) {
                                    *kv += a * dv;
                                }
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            let s: f64 = kern[krow..krow + g.cout].iter().zip(d).map(|(k, dv)| k * dv).sum();
                            dx[base_in + ci] += s;
                        }
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

/// 2-D convolution of an `H×W×Cin` input with `k×k×Cin×Cout` kernels.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input, kernels, bias, stride, pad)?;
    let out = conv2d_raw(&g, input.data(), kernels.data(), bias.map(|b| b.data()));
    Tensor::new(vec![g.ho, g.wo, g.cout], out)
}

pub(crate) fn affine_dims(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<(usize, usize)> {
    let &[n, m] = weight.shape() else {
        return Err(shape_err("affine", alloc::format!("weight must be n×m, got {:?}", weight.shape())));
    };
    if input.len() != n {
        return Err(shape_err("affine", alloc::format!("input has {} values, weight expects {n}", input.len())));
    }
    if let Some(b) = bias {
        if b.len() != m {
            return Err(shape_err("affine", alloc::format!("bias has {} values, expected {m}", b.len())));
        }
    }
    Ok((n, m))
}

pub(crate) fn affine_raw(x: &[f64], w: &[f64], bias: Option<&[f64]>, m: usize) -> Vec<f64> {
    let mut out = bias.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    for (i, &a) in x.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&w[i * m..(i + 1) * m]) {
            *o += a * wv;
        }
    }
    out
}

/// `inputᵀ · weight + bias` for a flattened input.
pub fn affine_forward(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (_, m) = affine_dims(input, weight, bias)?;
    Ok(Tensor::vector(affine_raw(input.data(), weight.data(), bias.map(|b| b.data()), m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let mut k = Tensor::zeros(&[3, 3, 1, 1]);
        k.data_mut()[4] = 1.0;
        let y = conv2d_forward(&x, &k, None, 1, 1).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let k = Tensor::full(&[3, 3, 1, 1], 1.0);
        let y = conv2d_forward(&x, &k, None, 1, 1).unwrap();
        assert_eq!(y.data(), &[10.0; 4]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::zeros(&[3, 3, 2]);
        let k = Tensor::full(&[3, 3, 2, 4], 0.3);
        let y = conv2d_forward(&x, &k, None, 1, 1).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::zeros(&[3, 3, 2]);
        let k = Tensor::zeros(&[3, 3, 3, 1]);
        assert!(conv2d_forward(&x, &k, None, 1, 1).is_err());
    }

    #[test]
    fn stride_two_halves_resolution() {
        let x = Tensor::full(&[48, 48, 3], 0.5);
        let k = Tensor::full(&[3, 3, 3, 2], 0.1);
        let y = conv2d_forward(&x, &k, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[24, 24, 2]);
        assert_eq!(conv_output_size(3, 3, 2, 1), 2);
        assert_eq!(conv_output_size(6, 3, 2, 1), 3);
    }

    #[test]
    fn affine_examples() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let y = affine_forward(&Tensor::vector(vec![1.0, 2.0]), &eye, Some(&Tensor::vector(vec![0.0, 0.0]))).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
        let w = t(&[2, 1], &[1.0, 1.0]);
        let y = affine_forward(&Tensor::vector(vec![1.0, 1.0]), &w, Some(&Tensor::scalar(3.0))).unwrap();
        assert_eq!(y.data(), &[5.0]);
        let y = affine_forward(&Tensor::vector(vec![0.0, 0.0]), &w, Some(&Tensor::scalar(3.0))).unwrap();
        assert_eq!(y.data(), &[3.0]);
        assert!(affine_forward(&Tensor::vector(vec![1.0; 3]), &w, None).is_err());
    }

    #[test]
    fn activation_examples() {
        let r = Activation::Relu.forward(&Tensor::vector(vec![-1.0, 0.0, 2.0]));
        assert_eq!(r.data(), &[0.0, 0.0, 2.0]);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        let s = Activation::ScaledSigmoid { scale: 99.99, offset: 0.01 };
        assert!((s.apply(0.0) - 50.005).abs() < 1e-12);
    }
}
