//! Elementwise activations: truncation (clamp to `[-T, T]`), absolute value
//! and ReLU, with their subgradients.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Threshold for the truncation activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TruncSpec {
    pub t: u32,
}

impl TruncSpec {
    pub fn new(t: u32) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidArgument {
                op: "trunc",
                msg: "threshold T must be >= 1".into(),
            });
        }
        Ok(TruncSpec { t })
    }
}

/// Clamp every element to `[-T, T]`.
pub fn trunc<T: Scalar>(input: &Tensor<T>, spec: TruncSpec) -> Tensor<T> {
    let t = T::from_f64(spec.t as f64);
    input.mapv(|x| {
        if x < -t {
            -t
        } else if x > t {
            t
        } else {
            x
        }
    })
}

/// Subgradient: 1 on the closed interval `[-T, T]`, 0 outside.
pub fn trunc_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: TruncSpec,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let t = T::from_f64(spec.t as f64);
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x < -t || x > t {
            *g = T::zero();
        }
    }
    grad
}

/// Elementwise absolute value.
pub fn abs_layer<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.mapv(|x| x.abs())
}

/// Multiplies the upstream gradient by sign(x), with sign(0) = 0.
pub fn abs_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x < T::zero() {
            *g = -*g;
        } else if x == T::zero() {
            *g = T::zero();
        }
    }
    grad
}

/// max(x, 0).
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.mapv(|x| if x > T::zero() { x } else { T::zero() })
}

/// Gradient 1 for x > 0, else 0 (including at x = 0).
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let mut grad = grad_out.clone();
    for (g, &x) in grad.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *g = T::zero();
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(1, 1, 1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn trunc_saturates_both_sides() {
        let spec = TruncSpec::new(3).unwrap();
        let out = trunc(&row(&[5.0, -7.0, 2.0]), spec);
        assert_eq!(out.data(), &[3.0, -3.0, 2.0]);
    }

    #[test]
    fn trunc_interior_gradient_is_one_boundary_inclusive() {
        let spec = TruncSpec::new(3).unwrap();
        let x = row(&[2.0, 3.0, -3.0, 3.5, -4.0]);
        let g = trunc_backward(&x, spec, &row(&[1.0; 5]));
        assert_eq!(g.data(), &[1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn trunc_is_idempotent_and_range_bounded() {
        let spec = TruncSpec::new(2).unwrap();
        let x = row(&[-9.0, -2.0, -0.5, 0.0, 1.9, 2.0, 100.0]);
        let once = trunc(&x, spec);
        assert!(once.iter().all(|&v| (-2.0..=2.0).contains(&v)));
        let twice = trunc(&once, spec);
        assert_eq!(once.data(), twice.data());
    }

    #[test]
    fn trunc_rejects_zero_threshold() {
        assert!(TruncSpec::new(0).is_err());
    }

    #[test]
    fn abs_values_and_gradient() {
        let out = abs_layer(&row(&[-1.0, 0.0, 2.0]));
        assert_eq!(out.data(), &[1.0, 0.0, 2.0]);
        let g = abs_backward(&row(&[-3.0, 0.0, 5.0]), &row(&[1.0, 1.0, 1.0]));
        assert_eq!(g.data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn abs_is_idempotent() {
        let x = row(&[-2.5, -0.1, 0.0, 0.1, 7.0]);
        let once = abs_layer(&x);
        assert_eq!(abs_layer(&once).data(), once.data());
    }

    #[test]
    fn relu_values_and_gradient() {
        let out = relu(&row(&[-2.0, 0.0, 3.0]));
        assert_eq!(out.data(), &[0.0, 0.0, 3.0]);
        let g = relu_backward(&row(&[-2.0, 0.0, 3.0]), &row(&[1.0, 1.0, 1.0]));
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_all_negative_gives_zero_output_and_gradient() {
        let x = row(&[-5.0, -1.0, -0.25]);
        assert!(relu(&x).iter().all(|&v| v == 0.0));
        let g = relu_backward(&x, &row(&[2.0, 2.0, 2.0]));
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_pair_reconstructs_abs() {
        let x = row(&[-3.0, -0.5, 0.0, 0.5, 4.0]);
        let neg = x.mapv(|v| -v);
        let lhs: Vec<f64> = relu(&x)
            .iter()
            .zip(relu(&neg).iter())
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(lhs, abs_layer(&x).data());
    }
}
