//! The 30 fixed high-pass residual kernels used by the pre-processing
//! convolution, zero-padded into 5×5 matrices and never trained.
//!
//! Classes: 8 first-order differences, 4 second-order `[1,-2,1]` lines,
//! 8 third-order `[-1,3,-3,1]` lines, one 3×3 square, one 5×5 square (the
//! KV kernel), 4 half-square 3×3 edges and 4 half-square 5×5 edges.
//! Directional variants are generated from one or two base matrices per
//! class by the 8 dihedral transforms; golden tests pin the results. The
//! coefficients are integers; no normalization is applied.

use crate::error::{Error, Result};
use crate::ops::{conv2d, ConvParams};
use crate::tensor::{Scalar, Tensor};

pub const KERNEL_SIZE: usize = 5;
pub const BANK_SIZE: usize = 30;

pub type Kernel = [[i32; KERNEL_SIZE]; KERNEL_SIZE];

#[derive(Debug, Clone)]
pub struct FilterBank {
    kernels: Vec<Kernel>,
    names: Vec<String>,
}

/// Clockwise 90° rotation.
fn rot90(k: &Kernel) -> Kernel {
    let mut out = [[0; KERNEL_SIZE]; KERNEL_SIZE];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = k[KERNEL_SIZE - 1 - c][r];
        }
    }
    out
}

fn rotations(k: &Kernel) -> [Kernel; 4] {
    let r1 = rot90(k);
    let r2 = rot90(&r1);
    let r3 = rot90(&r2);
    [*k, r1, r2, r3]
}

/// Center a smaller matrix inside the 5×5 support.
fn centered<const N: usize>(small: [[i32; N]; N]) -> Kernel {
    let off = (KERNEL_SIZE - N) / 2;
    let mut out = [[0; KERNEL_SIZE]; KERNEL_SIZE];
    for (r, row) in small.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[r + off][c + off] = v;
        }
    }
    out
}

/// The canonical 30-kernel bank, ordered class-major with clockwise
/// directions inside each class.
pub fn build_filter_bank() -> FilterBank {
    let mut kernels = Vec::with_capacity(BANK_SIZE);
    let mut names = Vec::with_capacity(BANK_SIZE);
    let mut push = |name: String, k: Kernel| {
        kernels.push(k);
        names.push(name);
    };

    let compass_axis = ["e", "s", "w", "n"];
    let compass_diag = ["se", "sw", "nw", "ne"];

    // first order: -1 at the center, +1 at one neighbor
    let mut first_axis = [[0; 5]; 5];
    first_axis[2][2] = -1;
    first_axis[2][3] = 1;
    let mut first_diag = [[0; 5]; 5];
    first_diag[2][2] = -1;
    first_diag[3][3] = 1;
    let axis_rots = rotations(&first_axis);
    let diag_rots = rotations(&first_diag);
    for i in 0..4 {
        push(format!("first_{}", compass_axis[i]), axis_rots[i]);
        push(format!("first_{}", compass_diag[i]), diag_rots[i]);
    }

    // second order: 1 -2 1 along a line through the center
    let mut second_axis = [[0; 5]; 5];
    second_axis[2][1] = 1;
    second_axis[2][2] = -2;
    second_axis[2][3] = 1;
    let mut second_diag = [[0; 5]; 5];
    second_diag[1][1] = 1;
    second_diag[2][2] = -2;
    second_diag[3][3] = 1;
    push("second_h".into(), second_axis);
    push("second_v".into(), rot90(&second_axis));
    push("second_d".into(), second_diag);
    push("second_m".into(), rot90(&second_diag));

    // third order: -1 3 -3 1 with the 3 at the center
    let mut third_axis = [[0; 5]; 5];
    third_axis[2][1] = -1;
    third_axis[2][2] = 3;
    third_axis[2][3] = -3;
    third_axis[2][4] = 1;
    let mut third_diag = [[0; 5]; 5];
    third_diag[1][1] = -1;
    third_diag[2][2] = 3;
    third_diag[3][3] = -3;
    third_diag[4][4] = 1;
    let axis_rots = rotations(&third_axis);
    let diag_rots = rotations(&third_diag);
    for i in 0..4 {
        push(format!("third_{}", compass_axis[i]), axis_rots[i]);
        push(format!("third_{}", compass_diag[i]), diag_rots[i]);
    }

    push(
        "square3".into(),
        centered([[-1, 2, -1], [2, -4, 2], [-1, 2, -1]]),
    );

    // the KV kernel
    push(
        "square5".into(),
        [
            [-1, 2, -2, 2, -1],
            [2, -6, 8, -6, 2],
            [-2, 8, -12, 8, -2],
            [2, -6, 8, -6, 2],
            [-1, 2, -2, 2, -1],
        ],
    );

    // half-square edges; rotation 0 keeps the filled half above the center
    let edge3 = centered([[-1, 2, -1], [2, -4, 2], [0, 0, 0]]);
    let edge3_rots = rotations(&edge3);
    let edge5: Kernel = [
        [-1, 2, -2, 2, -1],
        [2, -6, 8, -6, 2],
        [-2, 8, -12, 8, -2],
        [0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0],
    ];
    let edge5_rots = rotations(&edge5);
    for (i, deg) in [0u32, 90, 180, 270].iter().enumerate() {
        push(format!("edge3_{deg}"), edge3_rots[i]);
    }
    for (i, deg) in [0u32, 90, 180, 270].iter().enumerate() {
        push(format!("edge5_{deg}"), edge5_rots[i]);
    }

    debug_assert_eq!(kernels.len(), BANK_SIZE);
    FilterBank { kernels, names }
}

impl FilterBank {
    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kernel_by_name(&self, name: &str) -> Option<&Kernel> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.kernels[i])
    }

    /// Bank as a `(30, 1, 5, 5)` weights tensor.
    pub fn weights_tensor<T: Scalar>(&self) -> Tensor<T> {
        let mut data = Vec::with_capacity(BANK_SIZE * KERNEL_SIZE * KERNEL_SIZE);
        for k in &self.kernels {
            for row in k {
                for &v in row {
                    data.push(T::from_f64(v as f64));
                }
            }
        }
        Tensor::from_vec(BANK_SIZE, 1, KERNEL_SIZE, KERNEL_SIZE, data).unwrap()
    }

    /// Fixed (non-learnable) convolution parameters: stride 1, pad 2.
    pub fn conv_params<T: Scalar>(&self) -> ConvParams<T> {
        ConvParams::new(self.weights_tensor(), 1, 2, false)
    }

    /// Plain-text dump: one stanza per kernel, a name line then five rows
    /// of five integers.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for (name, k) in self.names.iter().zip(&self.kernels) {
            out.push_str(name);
            out.push('\n');
            for row in k {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}

/// Residual extraction: convolve a single-channel raw image batch with the
/// fixed bank (stride 1, pad 2 keeps the spatial size).
pub fn preprocess<T: Scalar>(image: &Tensor<T>, bank: &FilterBank) -> Result<Tensor<T>> {
    let s = image.shape();
    if s.c != 1 {
        return Err(Error::ShapeMismatch {
            op: "preprocess",
            dim: "channels",
            got: s.c,
            expected: 1,
        });
    }
    conv2d(image, &bank.conv_params::<T>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel_sum(k: &Kernel) -> i32 {
        k.iter().flatten().sum()
    }

    #[test]
    fn bank_has_30_zero_sum_kernels() {
        let bank = build_filter_bank();
        assert_eq!(bank.kernels().len(), 30);
        assert_eq!(bank.names().len(), 30);
        for (name, k) in bank.names().iter().zip(bank.kernels()) {
            assert_eq!(kernel_sum(k), 0, "kernel {name} does not sum to zero");
        }
    }

    #[test]
    fn all_kernels_distinct() {
        let bank = build_filter_bank();
        for i in 0..bank.kernels().len() {
            for j in i + 1..bank.kernels().len() {
                assert_ne!(
                    bank.kernels()[i],
                    bank.kernels()[j],
                    "{} duplicates {}",
                    bank.names()[i],
                    bank.names()[j]
                );
            }
        }
    }

    #[test]
    fn square5_is_the_kv_matrix() {
        let bank = build_filter_bank();
        let kv = bank.kernel_by_name("square5").unwrap();
        let expected: Kernel = [
            [-1, 2, -2, 2, -1],
            [2, -6, 8, -6, 2],
            [-2, 8, -12, 8, -2],
            [2, -6, 8, -6, 2],
            [-1, 2, -2, 2, -1],
        ];
        assert_eq!(kv, &expected);
        assert_eq!(kv[2][2], -12);
    }

    #[test]
    fn first_order_east_golden() {
        let bank = build_filter_bank();
        let k = bank.kernel_by_name("first_e").unwrap();
        let mut expected = [[0; 5]; 5];
        expected[2][2] = -1;
        expected[2][3] = 1;
        assert_eq!(k, &expected);
    }

    #[test]
    fn second_order_vertical_golden() {
        let bank = build_filter_bank();
        let k = bank.kernel_by_name("second_v").unwrap();
        let mut expected = [[0; 5]; 5];
        expected[1][2] = 1;
        expected[2][2] = -2;
        expected[3][2] = 1;
        assert_eq!(k, &expected);
    }

    #[test]
    fn edge3_rotations_golden() {
        let bank = build_filter_bank();
        let base = bank.kernel_by_name("edge3_0").unwrap();
        assert_eq!(base[1][1..4], [-1, 2, -1]);
        assert_eq!(base[2][1..4], [2, -4, 2]);
        assert_eq!(base[3][1..4], [0, 0, 0]);
        let r180 = bank.kernel_by_name("edge3_180").unwrap();
        assert_eq!(r180[1][1..4], [0, 0, 0]);
        assert_eq!(r180[2][1..4], [2, -4, 2]);
        assert_eq!(r180[3][1..4], [-1, 2, -1]);
    }

    #[test]
    fn first_order_on_ramp_is_constant_in_interior() {
        let bank = build_filter_bank();
        let (h, w) = (8, 8);
        let data: Vec<f64> = (0..h * w).map(|i| (i % w) as f64).collect();
        let img = Tensor::from_vec(1, 1, h, w, data).unwrap();
        let out = preprocess(&img, &bank).unwrap();
        let idx = bank.names().iter().position(|n| n == "first_e").unwrap();
        for y in 2..h - 2 {
            for x in 2..w - 2 {
                assert!((out.at(0, idx, y, x) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_gives_zero_residuals_in_interior() {
        // Zero-sum kernels annihilate a constant wherever the full 5x5
        // window is inside the image; the zero-padded border sees a
        // truncated window and is excluded.
        let bank = build_filter_bank();
        let img = Tensor::<f64>::full(1, 1, 16, 16, 173.0);
        let out = preprocess(&img, &bank).unwrap();
        for c in 0..30 {
            for y in 2..14 {
                for x in 2..14 {
                    assert!(out.at(0, c, y, x).abs() < 1e-9, "c={c} y={y} x={x}");
                }
            }
        }
    }

    #[test]
    fn multi_channel_input_rejected() {
        let bank = build_filter_bank();
        let img = Tensor::<f64>::zeros(1, 2, 8, 8);
        assert!(preprocess(&img, &bank).is_err());
    }

    #[test]
    fn output_channel_count_independent_of_image_size() {
        let bank = build_filter_bank();
        for (h, w) in [(8, 8), (16, 32), (33, 17)] {
            let img = Tensor::<f32>::zeros(2, 1, h, w);
            let out = preprocess(&img, &bank).unwrap();
            assert_eq!(out.shape().c, 30);
            assert_eq!((out.shape().h, out.shape().w), (h, w));
        }
    }

    #[test]
    fn single_pixel_change_stays_within_kernel_support() {
        let bank = build_filter_bank();
        let base = Tensor::<f64>::full(1, 1, 16, 16, 100.0);
        let mut bumped = base.clone();
        *bumped.at_mut(0, 0, 8, 8) = 101.0;
        let out_a = preprocess(&base, &bank).unwrap();
        let out_b = preprocess(&bumped, &bank).unwrap();
        for c in 0..30 {
            for y in 0..16 {
                for x in 0..16 {
                    let diff = (out_a.at(0, c, y, x) - out_b.at(0, c, y, x)).abs();
                    let inside = (6..=10).contains(&y) && (6..=10).contains(&x);
                    if !inside {
                        assert!(diff < 1e-12, "leak at c={c} y={y} x={x}");
                    }
                }
            }
        }
    }
}
