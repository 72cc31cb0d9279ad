//! Row-stabilized softmax fused with mean cross-entropy.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub struct SoftmaxXent<T: Scalar> {
    /// `(n, classes, 1, 1)` probabilities, each row summing to 1.
    pub probabilities: Tensor<T>,
    /// Mean cross-entropy over the batch.
    pub loss: f64,
}

/// Row-stabilized softmax over the channel dimension of `(n, k, 1, 1)`
/// logits. The row max is subtracted before exponentiation.
pub fn softmax_probs<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let s = logits.shape();
    if s.h != 1 || s.w != 1 {
        return Err(Error::ShapeMismatch {
            op: "softmax_xent",
            dim: "spatial size",
            got: s.h * s.w,
            expected: 1,
        });
    }
    let k = s.c;
    let mut probs = Tensor::zeros(s.n, k, 1, 1);
    for n in 0..s.n {
        let row = logits.image(n);
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_()));
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64_() - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        let out = &mut probs.data_mut()[n * k..(n + 1) * k];
        for (o, e) in out.iter_mut().zip(&exps) {
            *o = T::from_f64(e / denom);
        }
    }
    Ok(probs)
}

/// Softmax plus mean cross-entropy against integer labels.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<SoftmaxXent<T>> {
    let s = logits.shape();
    if labels.len() != s.n {
        return Err(Error::ShapeMismatch {
            op: "softmax_xent",
            dim: "labels length",
            got: labels.len(),
            expected: s.n,
        });
    }
    let k = s.c;
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument {
            op: "softmax_xent",
            msg: format!("label {bad} out of range for {k} classes"),
        });
    }
    let probs = softmax_probs(logits)?;
    // -log p[label] from the stabilized pieces (never ln(0))
    let mut loss = 0.0f64;
    for n in 0..s.n {
        let row = logits.image(n);
        let max = row
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_()));
        let denom: f64 = row.iter().map(|v| (v.to_f64_() - max).exp()).sum();
        loss += denom.ln() - (row[labels[n]].to_f64_() - max);
    }
    Ok(SoftmaxXent {
        probabilities: probs,
        loss: loss / s.n as f64,
    })
}

/// Gradient of the mean cross-entropy w.r.t. the logits:
/// `(p - one_hot(label)) / batch_size`.
pub fn softmax_xent_backward<T: Scalar>(
    probabilities: &Tensor<T>,
    labels: &[usize],
) -> Tensor<T> {
    let s = probabilities.shape();
    debug_assert_eq!(labels.len(), s.n);
    let inv_n = T::from_f64(1.0 / s.n as f64);
    let mut grad = probabilities.clone();
    let k = s.c;
    for (n, &label) in labels.iter().enumerate() {
        let row = &mut grad.data_mut()[n * k..(n + 1) * k];
        row[label] -= T::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_half_half_and_ln2() {
        let logits = Tensor::from_vec(1, 2, 1, 1, vec![0.7f64, 0.7]).unwrap();
        let out = softmax_xent(&logits, &[0]).unwrap();
        assert!((out.probabilities.data()[0] - 0.5).abs() < 1e-12);
        assert!((out.probabilities.data()[1] - 0.5).abs() < 1e-12);
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::from_vec(1, 2, 1, 1, vec![1000.0f64, -1000.0]).unwrap();
        let out = softmax_xent(&logits, &[0]).unwrap();
        assert!(out.loss.abs() < 1e-9);
        assert!(out.probabilities.all_finite());
        assert!((out.probabilities.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one() {
        let logits =
            Tensor::from_vec(3, 2, 1, 1, vec![0.3f64, -1.2, 5.0, 4.0, -2.0, -2.5]).unwrap();
        let out = softmax_xent(&logits, &[0, 1, 0]).unwrap();
        for n in 0..3 {
            let sum: f64 = out.probabilities.image(n).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn label_out_of_range_rejected() {
        let logits = Tensor::from_vec(1, 2, 1, 1, vec![0.0f64, 0.0]).unwrap();
        assert!(softmax_xent(&logits, &[2]).is_err());
    }

    #[test]
    fn backward_is_p_minus_onehot_over_n() {
        let logits = Tensor::from_vec(2, 2, 1, 1, vec![0.0f64, 0.0, 0.0, 0.0]).unwrap();
        let out = softmax_xent(&logits, &[0, 1]).unwrap();
        let g = softmax_xent_backward(&out.probabilities, &[0, 1]);
        assert!((g.data()[0] - (0.5 - 1.0) / 2.0).abs() < 1e-12);
        assert!((g.data()[1] - 0.5 / 2.0).abs() < 1e-12);
        assert!((g.data()[2] - 0.5 / 2.0).abs() < 1e-12);
        assert!((g.data()[3] - (0.5 - 1.0) / 2.0).abs() < 1e-12);
    }
}
