//! Fully connected layer on flattened feature vectors.
//!
//! Inputs are `(n, d, 1, 1)` tensors (the shape global average pooling
//! produces); weights are `(out, d, 1, 1)` and the bias is `(1, out, 1, 1)`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct FcParams<T: Scalar> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> FcParams<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        FcParams {
            weights: Tensor::zeros(out_dim, in_dim, 1, 1),
            bias: Tensor::zeros(1, out_dim, 1, 1),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape().c
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape().n
    }
}

fn validate<T: Scalar>(input: &Tensor<T>, p: &FcParams<T>) -> Result<()> {
    let s = input.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::ShapeMismatch {
            op: "fully_connected",
            dim: "spatial size",
            got: s.h * s.w,
            expected: 1,
        });
    }
    if s.c != p.in_dim() {
        return Err(Error::ShapeMismatch {
            op: "fully_connected",
            dim: "input width",
            got: s.c,
            expected: p.in_dim(),
        });
    }
    Ok(())
}

/// `y = W x + b` per batch row.
pub fn fully_connected<T: Scalar>(input: &Tensor<T>, p: &FcParams<T>) -> Result<Tensor<T>> {
    validate(input, p)?;
    let s = input.shape();
    let (d, o) = (p.in_dim(), p.out_dim());
    let w = p.weights.data();
    let b = p.bias.data();
    let mut out = Tensor::zeros(s.n, o, 1, 1);
    for n in 0..s.n {
        let x = input.image(n);
        let y = &mut out.data_mut()[n * o..(n + 1) * o];
        for (j, yj) in y.iter_mut().enumerate() {
            let row = &w[j * d..(j + 1) * d];
            let mut acc = T::zero();
            for (wi, xi) in row.iter().zip(x) {
                acc += *wi * *xi;
            }
            *yj = acc + b[j];
        }
    }
    Ok(out)
}

pub struct FcGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fully_connected_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &FcParams<T>,
    grad_out: &Tensor<T>,
) -> Result<FcGrads<T>> {
    validate(input, p)?;
    let s = input.shape();
    let (d, o) = (p.in_dim(), p.out_dim());
    let w = p.weights.data();
    let mut grad_in = Tensor::zeros(s.n, d, 1, 1);
    let mut grad_w = Tensor::zeros(o, d, 1, 1);
    let mut grad_b = Tensor::zeros(1, o, 1, 1);
    for n in 0..s.n {
        let x = input.image(n);
        let go = grad_out.image(n);
        let gx = &mut grad_in.data_mut()[n * d..(n + 1) * d];
        for (j, &gj) in go.iter().enumerate() {
            let row = &w[j * d..(j + 1) * d];
            let grow = &mut grad_w.data_mut()[j * d..(j + 1) * d];
            for i in 0..d {
                gx[i] += gj * row[i];
                grow[i] += gj * x[i];
            }
        }
        for (gb, &gj) in grad_b.data_mut().iter_mut().zip(go) {
            *gb += gj;
        }
    }
    Ok(FcGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecin(values: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(1, values.len(), 1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let mut p = FcParams::<f64>::zeros(3, 3);
        for i in 0..3 {
            p.weights.data_mut()[i * 3 + i] = 1.0;
        }
        let x = vecin(&[1.0, -2.0, 3.5]);
        assert_eq!(fully_connected(&x, &p).unwrap().data(), x.data());
    }

    #[test]
    fn zero_weights_yield_bias() {
        let mut p = FcParams::<f64>::zeros(4, 2);
        p.bias.data_mut().copy_from_slice(&[0.25, -1.0]);
        let x = vecin(&[9.0, 9.0, 9.0, 9.0]);
        assert_eq!(fully_connected(&x, &p).unwrap().data(), &[0.25, -1.0]);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let p = FcParams::<f64>::zeros(3, 2);
        let x = vecin(&[1.0, 2.0]);
        assert!(fully_connected(&x, &p).is_err());
    }

    #[test]
    fn spatial_input_rejected() {
        let p = FcParams::<f64>::zeros(4, 2);
        let x = Tensor::<f64>::zeros(1, 1, 2, 2);
        assert!(fully_connected(&x, &p).is_err());
    }
}
