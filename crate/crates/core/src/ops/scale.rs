//! Learned per-channel affine transform `y = gamma_c * x + beta_c`.
//!
//! Convolution layers carry no bias; the translation term of each block
//! lives here, next to its batch-norm.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-channel multipliers and offsets, stored as `(1, c, 1, 1)` tensors so
/// they plug into the common parameter machinery (grad buffers, velocity,
/// checkpoints).
#[derive(Debug, Clone)]
pub struct ScaleParams<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> ScaleParams<T> {
    /// gamma = 1, beta = 0.
    pub fn identity(channels: usize) -> Self {
        ScaleParams {
            gamma: Tensor::full(1, channels, 1, 1, T::one()),
            beta: Tensor::zeros(1, channels, 1, 1),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.shape().c
    }
}

pub fn scale<T: Scalar>(input: &Tensor<T>, p: &ScaleParams<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.c != p.channels() {
        return Err(Error::ShapeMismatch {
            op: "scale",
            dim: "channels",
            got: s.c,
            expected: p.channels(),
        });
    }
    let mut out = input.clone();
    for c in 0..s.c {
        let g = p.gamma.data()[c];
        let b = p.beta.data()[c];
        for n in 0..s.n {
            for v in out.map_mut(n, c) {
                *v = g * *v + b;
            }
        }
    }
    Ok(out)
}

pub struct ScaleGrads<T: Scalar> {
    pub input: Tensor<T>,
    /// Per-channel, shaped like gamma.
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub fn scale_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ScaleParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ScaleGrads<T>> {
    let s = input.shape();
    if s.c != p.channels() {
        return Err(Error::ShapeMismatch {
            op: "scale",
            dim: "channels",
            got: s.c,
            expected: p.channels(),
        });
    }
    let mut grad_in = grad_out.clone();
    let mut grad_gamma = Tensor::zeros(1, s.c, 1, 1);
    let mut grad_beta = Tensor::zeros(1, s.c, 1, 1);
    for c in 0..s.c {
        let g = p.gamma.data()[c];
        let mut dg = 0.0f64;
        let mut db = 0.0f64;
        for n in 0..s.n {
            for (&go, &x) in grad_out.map(n, c).iter().zip(input.map(n, c)) {
                dg += go.to_f64_() * x.to_f64_();
                db += go.to_f64_();
            }
            for v in grad_in.map_mut(n, c) {
                *v = *v * g;
            }
        }
        grad_gamma.data_mut()[c] = T::from_f64(dg);
        grad_beta.data_mut()[c] = T::from_f64(db);
    }
    Ok(ScaleGrads {
        input: grad_in,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
