//! Average pooling. Zero padding never enters the average: border windows
//! divide by the number of in-bounds elements they cover, so border residual
//! statistics are not dragged toward zero.

use crate::error::{Error, Result};
use crate::ops::conv::conv_out_dim;
use crate::tensor::{Scalar, Tensor};

/// Pooling geometry shared by forward and backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
    pub pad: usize,
}

fn validate<T: Scalar>(input: &Tensor<T>, spec: PoolSpec) -> Result<(usize, usize)> {
    if spec.window < 2 {
        return Err(Error::InvalidArgument {
            op: "avg_pool",
            msg: format!("window must be >= 2, got {}", spec.window),
        });
    }
    if spec.stride == 0 {
        return Err(Error::InvalidArgument {
            op: "avg_pool",
            msg: "stride must be positive".into(),
        });
    }
    let s = input.shape();
    if spec.window > s.h + 2 * spec.pad || spec.window > s.w + 2 * spec.pad {
        return Err(Error::InvalidArgument {
            op: "avg_pool",
            msg: format!(
                "window {} larger than padded input {}x{}",
                spec.window,
                s.h + 2 * spec.pad,
                s.w + 2 * spec.pad
            ),
        });
    }
    Ok((
        conv_out_dim(s.h, spec.window, spec.stride, spec.pad),
        conv_out_dim(s.w, spec.window, spec.stride, spec.pad),
    ))
}

/// In-bounds portion of the window anchored at output position `o`.
#[inline]
fn window_extent(o: usize, stride: usize, pad: usize, k: usize, limit: usize) -> (usize, usize) {
    let start = o * stride;
    let lo = start.saturating_sub(pad);
    let hi = (start + k).saturating_sub(pad).min(limit);
    (lo, hi.max(lo))
}

pub fn avg_pool<T: Scalar>(input: &Tensor<T>, spec: PoolSpec) -> Result<Tensor<T>> {
    let (oh, ow) = validate(input, spec)?;
    let s = input.shape();
    let mut out = Tensor::zeros(s.n, s.c, oh, ow);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.map(n, c);
            let dst = out.map_mut(n, c);
            for oy in 0..oh {
                let (y0, y1) = window_extent(oy, spec.stride, spec.pad, spec.window, s.h);
                for ox in 0..ow {
                    let (x0, x1) = window_extent(ox, spec.stride, spec.pad, spec.window, s.w);
                    let count = (y1 - y0) * (x1 - x0);
                    if count == 0 {
                        return Err(Error::InvalidArgument {
                            op: "avg_pool",
                            msg: format!("window at ({oy},{ox}) covers no valid elements"),
                        });
                    }
                    let mut sum = 0.0f64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            sum += src[y * s.w + x].to_f64_();
                        }
                    }
                    dst[oy * ow + ox] = T::from_f64(sum / count as f64);
                }
            }
        }
    }
    Ok(out)
}

/// Distributes each output gradient equally over the window elements that
/// contributed to it.
pub fn avg_pool_backward<T: Scalar>(
    input: &Tensor<T>,
    spec: PoolSpec,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (oh, ow) = validate(input, spec)?;
    let s = input.shape();
    let mut grad_in = Tensor::zeros(s.n, s.c, s.h, s.w);
    for n in 0..s.n {
        for c in 0..s.c {
            let go = grad_out.map(n, c);
            let gi = grad_in.map_mut(n, c);
            for oy in 0..oh {
                let (y0, y1) = window_extent(oy, spec.stride, spec.pad, spec.window, s.h);
                for ox in 0..ow {
                    let (x0, x1) = window_extent(ox, spec.stride, spec.pad, spec.window, s.w);
                    let count = ((y1 - y0) * (x1 - x0)) as f64;
                    let share = T::from_f64(go[oy * ow + ox].to_f64_() / count);
                    for y in y0..y1 {
                        for x in x0..x1 {
                            gi[y * s.w + x] += share;
                        }
                    }
                }
            }
        }
    }
    Ok(grad_in)
}

/// Mean over each full feature map: `(n,c,h,w) -> (n,c,1,1)`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let mut out = Tensor::zeros(s.n, s.c, 1, 1);
    let hw = (s.h * s.w) as f64;
    for n in 0..s.n {
        for c in 0..s.c {
            let sum: f64 = input.map(n, c).iter().map(|v| v.to_f64_()).sum();
            *out.at_mut(n, c, 0, 0) = T::from_f64(sum / hw);
        }
    }
    out
}

pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: crate::tensor::Shape,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let s = input_shape;
    let mut grad_in = Tensor::zeros(s.n, s.c, s.h, s.w);
    let hw = T::from_f64((s.h * s.w) as f64);
    for n in 0..s.n {
        for c in 0..s.c {
            let share = grad_out.at(n, c, 0, 0) / hw;
            grad_in.map_mut(n, c).fill(share);
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_window_means() {
        let x = Tensor::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = avg_pool(
            &x,
            PoolSpec {
                window: 2,
                stride: 2,
                pad: 0,
            },
        )
        .unwrap();
        assert_eq!(out.data(), &[2.5]);
    }

    #[test]
    fn constant_image_stays_constant_at_reduced_size() {
        let x = Tensor::<f64>::full(1, 1, 8, 8, 3.25);
        let out = avg_pool(
            &x,
            PoolSpec {
                window: 5,
                stride: 2,
                pad: 2,
            },
        )
        .unwrap();
        assert_eq!(out.shape().h, 4);
        assert_eq!(out.shape().w, 4);
        // padding excluded from the divisor, so borders keep the value too
        assert!(out.iter().all(|&v| (v - 3.25).abs() < 1e-12));
    }

    #[test]
    fn same_pad_stride_two_halves_128() {
        let x = Tensor::<f64>::zeros(1, 1, 128, 128);
        let out = avg_pool(
            &x,
            PoolSpec {
                window: 5,
                stride: 2,
                pad: 2,
            },
        )
        .unwrap();
        assert_eq!((out.shape().h, out.shape().w), (64, 64));
    }

    #[test]
    fn window_larger_than_padded_input_rejected() {
        let x = Tensor::<f64>::zeros(1, 1, 3, 3);
        let err = avg_pool(
            &x,
            PoolSpec {
                window: 6,
                stride: 1,
                pad: 1,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("larger than padded input"));
    }

    #[test]
    fn window_below_two_rejected() {
        let x = Tensor::<f64>::zeros(1, 1, 3, 3);
        assert!(avg_pool(
            &x,
            PoolSpec {
                window: 1,
                stride: 1,
                pad: 0,
            },
        )
        .is_err());
    }

    #[test]
    fn global_pool_means_and_dihedral_invariance() {
        let x = Tensor::from_vec(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool(&x).data(), &[2.5]);
        // any permutation of the map leaves the mean unchanged
        let perms: [[usize; 4]; 3] = [[3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]];
        for p in perms {
            let data: Vec<f64> = p.iter().map(|&i| x.data()[i]).collect();
            let t = Tensor::from_vec(1, 1, 2, 2, data).unwrap();
            assert_eq!(global_avg_pool(&t).data(), &[2.5]);
        }
    }

    #[test]
    fn constant_map_global_pools_to_itself() {
        let x = Tensor::<f64>::full(2, 3, 4, 5, -1.5);
        let out = global_avg_pool(&x);
        assert_eq!(out.shape(), crate::tensor::Shape::new(2, 3, 1, 1));
        assert!(out.iter().all(|&v| (v + 1.5).abs() < 1e-12));
    }
}
