//! SGD with momentum and weight decay, in the convention where the velocity
//! accumulates the learning rate:
//!
//! ```text
//! v <- momentum*v + lr*(g + weight_decay*w)
//! w <- w - v
//! ```
//!
//! Weight decay is skipped for bias-like parameters (scale beta, fc bias).
//! The fixed pre-processing bank is never visited: velocity buffers exist
//! 1:1 with learnable parameters only.

use crate::net::{NetworkGraph, ParamKind};
use crate::tensor::Scalar;

/// One parameter's update. `weight_decay` must already be zeroed for
/// bias-like parameters.
pub fn sgd_step_param<T: Scalar>(
    weights: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    momentum: f64,
    lr: f64,
    weight_decay: f64,
) {
    debug_assert_eq!(weights.len(), grads.len());
    debug_assert_eq!(weights.len(), velocity.len());
    let m = T::from_f64(momentum);
    let lr = T::from_f64(lr);
    let wd = T::from_f64(weight_decay);
    for ((w, &g), v) in weights.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = m * *v + lr * (g + wd * *w);
        *w = *w - *v;
    }
}

/// Velocity buffers for every learnable parameter of a graph, in visit
/// order.
pub struct SgdState<T: Scalar> {
    velocities: Vec<Vec<T>>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(graph: &mut NetworkGraph<T>) -> Self {
        let mut velocities = Vec::new();
        graph.visit_learnable_mut(|_, _, t| velocities.push(vec![T::zero(); t.numel()]));
        SgdState { velocities }
    }

    pub fn param_count(&self) -> usize {
        self.velocities.len()
    }

    /// Apply one update from the accumulated gradients.
    pub fn step(
        &mut self,
        graph: &mut NetworkGraph<T>,
        momentum: f64,
        weight_decay: f64,
        lr: f64,
    ) {
        let mut idx = 0;
        let velocities = &mut self.velocities;
        graph.visit_learnable_mut(|name, kind, t| {
            let v = velocities
                .get_mut(idx)
                .unwrap_or_else(|| panic!("no velocity for parameter {name}"));
            let wd = match kind {
                ParamKind::Weight => weight_decay,
                ParamKind::Bias => 0.0,
            };
            let grad = t
                .grad()
                .unwrap_or_else(|| panic!("parameter {name} has no gradient"))
                .to_vec();
            sgd_step_param(t.data_mut(), &grad, v, momentum, lr, wd);
            idx += 1;
        });
        debug_assert_eq!(idx, velocities.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_arithmetic_matches_hand_values() {
        // w=1, g=0.1, v=0, lr=0.01, momentum=0.95, wd=1e-4:
        // v = 0.01*(0.1 + 1e-4*1) = 0.001001, w = 1 - v
        let mut w = [1.0f64];
        let mut v = [0.0f64];
        sgd_step_param(&mut w, &[0.1], &mut v, 0.95, 0.01, 1e-4);
        assert!((v[0] - 0.001001).abs() < 1e-15, "v = {}", v[0]);
        assert!((w[0] - 0.998999).abs() < 1e-15, "w = {}", w[0]);
    }

    #[test]
    fn zero_gradient_zero_decay_is_a_fixed_point() {
        let mut w = [0.5f64, -0.25];
        let mut v = [0.0f64, 0.0];
        sgd_step_param(&mut w, &[0.0, 0.0], &mut v, 0.95, 0.01, 0.0);
        assert_eq!(w, [0.5, -0.25]);
        assert_eq!(v, [0.0, 0.0]);
    }

    #[test]
    fn momentum_carries_velocity_across_steps() {
        let mut w = [0.0f64];
        let mut v = [0.0f64];
        sgd_step_param(&mut w, &[1.0], &mut v, 0.9, 0.1, 0.0);
        assert!((v[0] - 0.1).abs() < 1e-15);
        sgd_step_param(&mut w, &[1.0], &mut v, 0.9, 0.1, 0.0);
        // v = 0.9*0.1 + 0.1 = 0.19
        assert!((v[0] - 0.19).abs() < 1e-15);
        assert!((w[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn velocities_exist_one_per_learnable_parameter() {
        use crate::net::{build_yedroudj, YedroudjConfig};
        let mut g = build_yedroudj::<f32>(&YedroudjConfig::default()).unwrap();
        let state = SgdState::new(&mut g);
        // 5 conv weights + 5 scale gamma/beta pairs + 3 fc weight/bias pairs
        assert_eq!(state.param_count(), 5 + 10 + 6);
    }
}
