//! Per-channel batch normalization.
//!
//! Train mode standardizes each channel with batch statistics and maintains
//! running statistics by exponential moving average; eval mode standardizes
//! with the running statistics. The affine (gamma/beta) part lives in the
//! separate scale op. Statistics are accumulated in `f64` regardless of the
//! tensor element type.

use crate::error::{Error, Result};
use crate::tensor::{Mode, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct BnState<T: Scalar> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    /// Retain factor: `running <- m*running + (1-m)*batch`.
    pub stat_momentum: f64,
    pub mode: Mode,
    initialized: bool,
}

impl<T: Scalar> BnState<T> {
    pub fn new(channels: usize, eps: f64, stat_momentum: f64) -> Self {
        assert!(eps > 0.0, "bn eps must be positive");
        assert!(
            stat_momentum > 0.0 && stat_momentum < 1.0,
            "bn stat_momentum must lie in (0,1)"
        );
        BnState {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps,
            stat_momentum,
            mode: Mode::Train,
            initialized: false,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Restore from checkpointed running statistics.
    pub fn set_running(&mut self, mean: Vec<T>, var: Vec<T>) {
        debug_assert_eq!(mean.len(), var.len());
        self.running_mean = mean;
        self.running_var = var;
        self.initialized = true;
    }
}

/// Saved per-forward values needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T: Scalar> {
    /// Normalized output x̂ (train) or eval output.
    pub normalized: Tensor<T>,
    pub inv_std: Vec<f64>,
    pub train_stats: bool,
}

pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    state: &mut BnState<T>,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let s = input.shape();
    if s.c != state.channels() {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            dim: "channels",
            got: s.c,
            expected: state.channels(),
        });
    }
    match state.mode {
        Mode::Train => {
            let m = s.n * s.h * s.w;
            if m < 2 {
                return Err(Error::InvalidArgument {
                    op: "batch_norm",
                    msg: format!("train mode needs at least 2 values per channel, got {m}"),
                });
            }
            let mut out = input.clone();
            let mut inv_stds = vec![0.0f64; s.c];
            for c in 0..s.c {
                let mut sum = 0.0f64;
                let mut sq_sum = 0.0f64;
                for n in 0..s.n {
                    for &v in input.map(n, c) {
                        let v = v.to_f64_();
                        sum += v;
                        sq_sum += v * v;
                    }
                }
                let mean = sum / m as f64;
                let var = (sq_sum / m as f64 - mean * mean).max(0.0);
                let inv_std = 1.0 / (var + state.eps).sqrt();
                inv_stds[c] = inv_std;
                let mean_t = T::from_f64(mean);
                let inv_std_t = T::from_f64(inv_std);
                for n in 0..s.n {
                    for v in out.map_mut(n, c) {
                        *v = (*v - mean_t) * inv_std_t;
                    }
                }
                let keep = state.stat_momentum;
                let rm = state.running_mean[c].to_f64_() * keep + (1.0 - keep) * mean;
                let rv = state.running_var[c].to_f64_() * keep + (1.0 - keep) * var;
                state.running_mean[c] = T::from_f64(rm);
                state.running_var[c] = T::from_f64(rv);
            }
            state.initialized = true;
            let cache = BnCache {
                normalized: out.clone(),
                inv_std: inv_stds,
                train_stats: true,
            };
            Ok((out, cache))
        }
        Mode::Eval => {
            if !state.initialized {
                return Err(Error::UninitializedStatistics);
            }
            let mut out = input.clone();
            let mut inv_stds = vec![0.0f64; s.c];
            for c in 0..s.c {
                let mean = state.running_mean[c];
                let inv_std = 1.0 / (state.running_var[c].to_f64_() + state.eps).sqrt();
                inv_stds[c] = inv_std;
                let inv_std_t = T::from_f64(inv_std);
                for n in 0..s.n {
                    for v in out.map_mut(n, c) {
                        *v = (*v - mean) * inv_std_t;
                    }
                }
            }
            let cache = BnCache {
                normalized: out.clone(),
                inv_std: inv_stds,
                train_stats: false,
            };
            Ok((out, cache))
        }
    }
}

/// Gradient w.r.t. the input. In train mode the gradient flows through the
/// batch mean and variance; in eval mode the statistics are constants.
pub fn batch_norm_backward<T: Scalar>(cache: &BnCache<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let s = grad_out.shape();
    let mut grad_in = grad_out.clone();
    if !cache.train_stats {
        for c in 0..s.c {
            let inv_std = T::from_f64(cache.inv_std[c]);
            for n in 0..s.n {
                for g in grad_in.map_mut(n, c) {
                    *g = *g * inv_std;
                }
            }
        }
        return grad_in;
    }
    let m = (s.n * s.h * s.w) as f64;
    for c in 0..s.c {
        let mut g_sum = 0.0f64;
        let mut gx_sum = 0.0f64;
        for n in 0..s.n {
            for (&g, &xh) in grad_out.map(n, c).iter().zip(cache.normalized.map(n, c)) {
                g_sum += g.to_f64_();
                gx_sum += g.to_f64_() * xh.to_f64_();
            }
        }
        let g_mean = g_sum / m;
        let gx_mean = gx_sum / m;
        let inv_std = cache.inv_std[c];
        for n in 0..s.n {
            let xh_map = cache.normalized.map(n, c);
            for (g, xh) in grad_in.map_mut(n, c).iter_mut().zip(xh_map) {
                let gv = g.to_f64_();
                *g = T::from_f64(inv_std * (gv - g_mean - xh.to_f64_() * gx_mean));
            }
        }
    }
    grad_in
}
