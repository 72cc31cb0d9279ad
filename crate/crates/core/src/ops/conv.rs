//! 2-D convolution (cross-correlation, no kernel flip) with symmetric zero
//! padding, plus its input/weight gradients.
//!
//! The forward and backward passes lower each image to column form in bands
//! of output rows and run a GEMM per band. Images are processed in parallel;
//! every output element is produced by exactly one GEMM call, so results do
//! not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Convolution parameters. Kernels are square; there is no bias term.
#[derive(Debug, Clone)]
pub struct ConvParams<T: Scalar> {
    /// Weights shaped `(out_channels, in_channels, k, k)`.
    pub weights: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
    /// Fixed banks (the SRM pre-processing) set this to `false`: their
    /// gradient is never computed and the optimizer never visits them.
    pub learnable: bool,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weights: Tensor<T>, stride: usize, pad: usize, learnable: bool) -> Self {
        ConvParams {
            weights,
            stride,
            pad,
            learnable,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape().h
    }
}

/// Symmetric padding that keeps `out = ceil(in/stride)` for odd `k`.
pub fn same_pad(k: usize) -> usize {
    (k - 1) / 2
}

/// Output spatial size for one dimension.
#[inline]
pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

fn validate<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<(usize, usize)> {
    let ws = p.weights.shape();
    if ws.h != ws.w {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            dim: "kernel width",
            got: ws.w,
            expected: ws.h,
        });
    }
    let s = input.shape();
    if s.c != ws.c {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            dim: "input channels",
            got: s.c,
            expected: ws.c,
        });
    }
    if p.stride == 0 {
        return Err(Error::InvalidArgument {
            op: "conv2d",
            msg: "stride must be positive".into(),
        });
    }
    if s.h + 2 * p.pad < ws.h || s.w + 2 * p.pad < ws.w {
        return Err(Error::InvalidArgument {
            op: "conv2d",
            msg: format!(
                "kernel {}x{} larger than padded input {}x{}",
                ws.h,
                ws.w,
                s.h + 2 * p.pad,
                s.w + 2 * p.pad
            ),
        });
    }
    if let Some(idx) = input.first_non_finite() {
        return Err(Error::NonFiniteInput {
            op: "conv2d",
            index: idx,
        });
    }
    Ok((
        conv_out_dim(s.h, ws.h, p.stride, p.pad),
        conv_out_dim(s.w, ws.w, p.stride, p.pad),
    ))
}

/// Valid output-column range for a given kernel column offset, i.e. the
/// `ow` for which `ow*stride - pad + kw` lands inside `[0, w)`.
#[inline]
fn valid_ow_range(w: usize, ow: usize, stride: usize, pad: usize, kw: usize) -> (usize, usize) {
    // smallest ow with ow*stride >= pad - kw
    let lo = if pad > kw {
        (pad - kw).div_ceil(stride)
    } else {
        0
    };
    // largest ow with ow*stride <= w - 1 + pad - kw
    let hi_num = w - 1 + pad;
    let hi = if hi_num >= kw {
        (((hi_num - kw) / stride) + 1).min(ow)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Fill `cols` (shape `ic*k*k × band_rows*ow`, row-major) from output rows
/// `[r0, r1)` of one image.
#[allow(clippy::too_many_arguments)]
fn im2col_band<T: Scalar>(
    image: &[T],
    ic: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ow: usize,
    r0: usize,
    r1: usize,
    cols: &mut [T],
) {
    let band_cols = (r1 - r0) * ow;
    debug_assert_eq!(cols.len(), ic * k * k * band_cols);
    let (ow_lo_by_kw, ow_hi_by_kw): (Vec<usize>, Vec<usize>) = (0..k)
        .map(|kw| valid_ow_range(w, ow, stride, pad, kw))
        .unzip();
    for icc in 0..ic {
        let plane = &image[icc * h * w..(icc + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = (icc * k + kh) * k + kw;
                let dst_row = &mut cols[row * band_cols..(row + 1) * band_cols];
                for or in r0..r1 {
                    let dst = &mut dst_row[(or - r0) * ow..(or - r0 + 1) * ow];
                    let ih = (or * stride + kh) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                    let (lo, hi) = (ow_lo_by_kw[kw], ow_hi_by_kw[kw]);
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    if hi <= lo {
                        continue;
                    }
                    if stride == 1 {
                        // contiguous run: iw = ow + kw - pad
                        let start = lo + kw - pad;
                        dst[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                    } else {
                        for (owi, d) in dst.iter_mut().enumerate().take(hi).skip(lo) {
                            let iw = (owi * stride + kw) as isize - pad as isize;
                            *d = src[iw as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of column gradients back to image layout (inverse of
/// [`im2col_band`]).
#[allow(clippy::too_many_arguments)]
fn col2im_band<T: Scalar>(
    cols: &[T],
    ic: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ow: usize,
    r0: usize,
    r1: usize,
    image: &mut [T],
) {
    let band_cols = (r1 - r0) * ow;
    for icc in 0..ic {
        let plane = &mut image[icc * h * w..(icc + 1) * h * w];
        for kh in 0..k {
            for kw in 0..k {
                let row = (icc * k + kh) * k + kw;
                let src_row = &cols[row * band_cols..(row + 1) * band_cols];
                let (lo, hi) = valid_ow_range(w, ow, stride, pad, kw);
                for or in r0..r1 {
                    let ih = (or * stride + kh) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * w..(ih as usize + 1) * w];
                    let src = &src_row[(or - r0) * ow..(or - r0 + 1) * ow];
                    for owi in lo..hi {
                        let iw = (owi * stride + kw) as isize - pad as isize;
                        dst[iw as usize] += src[owi];
                    }
                }
            }
        }
    }
}

/// Band height targeting roughly this many output elements per GEMM call.
/// Fixed: band geometry never depends on thread count.
fn band_rows(oh: usize, ow: usize) -> usize {
    (2048 / ow.max(1)).clamp(1, oh)
}

/// Cross-correlation of `input (n,ic,h,w)` with `p.weights (oc,ic,k,k)`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let (oh, ow) = validate(input, p)?;
    let s = input.shape();
    let (ic, k) = (p.in_channels(), p.kernel());
    let oc = p.out_channels();
    let ickk = ic * k * k;
    let mut out = Tensor::zeros(s.n, oc, oh, ow);
    let chw_in = ic * s.h * s.w;
    let chw_out = oc * oh * ow;
    let band = band_rows(oh, ow);
    let weights = p.weights.data();

    out.data_mut()
        .par_chunks_mut(chw_out)
        .zip(input.data().par_chunks(chw_in))
        .for_each(|(out_img, in_img)| {
            let mut cols = vec![T::zero(); ickk * band * ow];
            let mut r0 = 0;
            while r0 < oh {
                let r1 = (r0 + band).min(oh);
                let band_cols = (r1 - r0) * ow;
                im2col_band(
                    in_img,
                    ic,
                    s.h,
                    s.w,
                    k,
                    p.stride,
                    p.pad,
                    ow,
                    r0,
                    r1,
                    &mut cols[..ickk * band_cols],
                );
                T::gemm(
                    oc,
                    ickk,
                    band_cols,
                    weights,
                    ickk as isize,
                    1,
                    &cols[..ickk * band_cols],
                    band_cols as isize,
                    1,
                    T::zero(),
                    &mut out_img[r0 * ow..],
                    (oh * ow) as isize,
                    1,
                );
                r0 = r1;
            }
        });
    Ok(out)
}

/// Gradients returned by [`conv2d_backward`].
pub struct ConvGrads<T: Scalar> {
    pub input: Option<Tensor<T>>,
    /// Same shape as the weights; `None` when not requested.
    pub weights: Option<Tensor<T>>,
}

/// Backward pass. `want_input`/`want_weights` select which gradients to
/// compute (the pre-processing bank needs neither; the first learnable
/// layer after it needs only weights).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
    want_input: bool,
    want_weights: bool,
) -> Result<ConvGrads<T>> {
    let (oh, ow) = validate(input, p)?;
    let s = input.shape();
    let go = grad_out.shape();
    if (go.n, go.c, go.h, go.w) != (s.n, p.out_channels(), oh, ow) {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            dim: "grad_out elements",
            got: go.numel(),
            expected: s.n * p.out_channels() * oh * ow,
        });
    }
    if !want_input && !want_weights {
        return Ok(ConvGrads {
            input: None,
            weights: None,
        });
    }

    let (ic, k) = (p.in_channels(), p.kernel());
    let oc = p.out_channels();
    let chw_in = ic * s.h * s.w;
    let chw_out = oc * oh * ow;
    let band = band_rows(oh, ow);
    let weights = p.weights.data();

    let mut grad_input = want_input.then(|| Tensor::zeros(s.n, ic, s.h, s.w));
    let mut empty: [T; 0] = [];

    // Per-image weight-gradient blocks, reduced in image order afterwards so
    // the sum is independent of scheduling.
    let per_image_wgrads: Vec<Vec<T>> = {
        let gi_chunks: Vec<&mut [T]> = match &mut grad_input {
            Some(t) => t.data_mut().chunks_mut(chw_in).collect(),
            None => empty.chunks_mut(1).collect(),
        };
        let in_chunks: Vec<&[T]> = input.data().chunks(chw_in).collect();
        let go_chunks: Vec<&[T]> = grad_out.data().chunks(chw_out).collect();

        if want_input {
            gi_chunks
                .into_par_iter()
                .zip(in_chunks.into_par_iter().zip(go_chunks))
                .map(|(gi_img, (in_img, go_img))| {
                    backward_one_image(
                        in_img,
                        go_img,
                        Some(gi_img),
                        want_weights,
                        weights,
                        ic,
                        oc,
                        k,
                        s.h,
                        s.w,
                        oh,
                        ow,
                        p.stride,
                        p.pad,
                        band,
                    )
                })
                .collect()
        } else {
            in_chunks
                .into_par_iter()
                .zip(go_chunks)
                .map(|(in_img, go_img)| {
                    backward_one_image(
                        in_img,
                        go_img,
                        None,
                        want_weights,
                        weights,
                        ic,
                        oc,
                        k,
                        s.h,
                        s.w,
                        oh,
                        ow,
                        p.stride,
                        p.pad,
                        band,
                    )
                })
                .collect()
        }
    };

    let grad_weights = want_weights.then(|| {
        let mut acc = Tensor::zeros(oc, ic, k, k);
        for img_grad in &per_image_wgrads {
            for (a, g) in acc.data_mut().iter_mut().zip(img_grad) {
                *a += *g;
            }
        }
        acc
    });

    Ok(ConvGrads {
        input: grad_input,
        weights: grad_weights,
    })
}

#[allow(clippy::too_many_arguments)]
fn backward_one_image<T: Scalar>(
    in_img: &[T],
    go_img: &[T],
    gi_img: Option<&mut [T]>,
    want_weights: bool,
    weights: &[T],
    ic: usize,
    oc: usize,
    k: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
    band: usize,
) -> Vec<T> {
    let ickk = ic * k * k;
    let mut wgrad = if want_weights {
        vec![T::zero(); oc * ickk]
    } else {
        Vec::new()
    };
    let mut cols = vec![T::zero(); ickk * band * ow];
    let mut gi_img = gi_img;
    let mut r0 = 0;
    while r0 < oh {
        let r1 = (r0 + band).min(oh);
        let band_cols = (r1 - r0) * ow;
        if want_weights {
            im2col_band(
                in_img,
                ic,
                h,
                w,
                k,
                stride,
                pad,
                ow,
                r0,
                r1,
                &mut cols[..ickk * band_cols],
            );
            // dW += dOut_band (oc × band_cols) · colsᵀ (band_cols × ickk)
            T::gemm(
                oc,
                band_cols,
                ickk,
                &go_img[r0 * ow..],
                (oh * ow) as isize,
                1,
                &cols[..ickk * band_cols],
                1,
                band_cols as isize,
                T::one(),
                &mut wgrad,
                ickk as isize,
                1,
            );
        }
        if let Some(gi) = gi_img.as_deref_mut() {
            // colsGrad = Wᵀ (ickk × oc) · dOut_band (oc × band_cols)
            T::gemm(
                ickk,
                oc,
                band_cols,
                weights,
                1,
                ickk as isize,
                &go_img[r0 * ow..],
                (oh * ow) as isize,
                1,
                T::zero(),
                &mut cols[..ickk * band_cols],
                band_cols as isize,
                1,
            );
            col2im_band(
                &cols[..ickk * band_cols],
                ic,
                h,
                w,
                k,
                stride,
                pad,
                ow,
                r0,
                r1,
                gi,
            );
        }
        r0 = r1;
    }
    wgrad
}
