//! Rank-4 tensor storage in (batch, channel, row, col) row-major order.
//!
//! All feature maps, convolution kernels and parameter blocks in the engine
//! are carried by [`Tensor`]. Training runs in `f32`; gradient checking runs
//! the same code paths in `f64`.

use rand::Rng;

use crate::error::{Error, Result};

/// Element type of the engine: `f32` for training, `f64` for checking.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64_(self) -> f64;

    /// Row-major matrix product `C = A (m×k) · B (k×n)`, strides in elements.
    ///
    /// # Safety contract (upheld by callers in this crate)
    /// The slices must cover every element addressed by the given strides.
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self as f64
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            );
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            );
        }
    }
}

/// Tensor shape `(n, c, h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

/// Rank-4 numeric array with an optional gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        let shape = Shape::new(n, c, h, w);
        Tensor {
            shape,
            data: vec![T::zero(); shape.numel()],
            grad: None,
        }
    }

    pub fn full(n: usize, c: usize, h: usize, w: usize, value: T) -> Self {
        let shape = Shape::new(n, c, h, w);
        Tensor {
            shape,
            data: vec![value; shape.numel()],
            grad: None,
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(n, c, h, w);
        if data.len() != shape.numel() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::from_vec",
                dim: "data length",
                got: data.len(),
                expected: shape.numel(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// Uniform values in `[lo, hi)` from the caller's RNG.
    pub fn random_uniform<R: Rng>(
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Self {
        let shape = Shape::new(n, c, h, w);
        let data = (0..shape.numel())
            .map(|_| T::from_f64(rng.random_range(lo..hi)))
            .collect();
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        debug_assert!(n < self.shape.n && c < self.shape.c && h < self.shape.h && w < self.shape.w);
        self.data[((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut T {
        debug_assert!(n < self.shape.n && c < self.shape.c && h < self.shape.h && w < self.shape.w);
        &mut self.data[((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w]
    }

    /// Contiguous view of image `n`, channel `c` (one `h×w` map).
    #[inline]
    pub fn map(&self, n: usize, c: usize) -> &[T] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn map_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let hw = self.shape.h * self.shape.w;
        let start = (n * self.shape.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Contiguous view of image `n` (all channels).
    #[inline]
    pub fn image(&self, n: usize) -> &[T] {
        let chw = self.shape.c * self.shape.h * self.shape.w;
        &self.data[n * chw..(n + 1) * chw]
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Allocate the gradient buffer (zeroed) if not present.
    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.shape.numel()]);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.fill(T::zero());
        }
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocating on first access.
    pub fn grad_mut(&mut self) -> &mut [T] {
        self.ensure_grad();
        self.grad.as_deref_mut().unwrap()
    }

    /// Accumulate `delta` into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &[T]) {
        debug_assert_eq!(delta.len(), self.shape.numel());
        let g = self.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += *di;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// Elementwise map into a new tensor (grad buffer not carried over).
    pub fn mapv(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Same-shape tensor of zeros, no grad buffer.
    pub fn zeros_like(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: vec![T::zero(); self.shape.numel()],
            grad: None,
        }
    }

    /// Convert element type (used to lift `f32` cases into `f64` checks).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64_())).collect(),
            grad: None,
        }
    }
}

/// Train/eval mode switch shared by the graph and batch-norm state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Tensor::<f32>::from_vec(1, 2, 2, 2, vec![0.0; 7]).unwrap_err();
        assert!(err.to_string().contains("data length"));
    }

    #[test]
    fn indexing_is_row_major_nchw() {
        let t = Tensor::<f32>::from_vec(1, 2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(t.at(0, 0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 1, 2), 5.0);
        assert_eq!(t.at(0, 1, 0, 0), 6.0);
        assert_eq!(t.at(0, 1, 1, 1), 10.0);
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::<f64>::zeros(1, 1, 1, 3);
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0, 0.0]);
    }
}
