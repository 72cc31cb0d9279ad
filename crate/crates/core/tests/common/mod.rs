//! Independent brute-force oracles shared by the integration tests. These
//! must stay naive (direct summation, explicit loops) so they check the
//! optimized implementation paths rather than mirroring them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stegonet::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    amp: f64,
) -> Tensor<f64> {
    Tensor::random_uniform(n, c, h, w, -amp, amp, rng)
}

/// Direct quintuple-loop cross-correlation with symmetric zero padding.
pub fn conv2d_oracle(
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let s = input.shape();
    let ws = weights.shape();
    let (oc, ic, k) = (ws.n, ws.c, ws.h);
    assert_eq!(s.c, ic);
    let oh = (s.h + 2 * pad - k) / stride + 1;
    let ow = (s.w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(s.n, oc, oh, ow);
    for n in 0..s.n {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for i in 0..ic {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += input.at(n, i, iy as usize, ix as usize)
                                    * weights.at(o, i, ky, kx);
                            }
                        }
                    }
                    *out.at_mut(n, o, oy, ox) = acc;
                }
            }
        }
    }
    out
}

/// Direct average pooling; zero padding excluded from the divisor.
pub fn avg_pool_oracle(
    input: &Tensor<f64>,
    window: usize,
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let s = input.shape();
    let oh = (s.h + 2 * pad - window) / stride + 1;
    let ow = (s.w + 2 * pad - window) / stride + 1;
    let mut out = Tensor::zeros(s.n, s.c, oh, ow);
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for ky in 0..window {
                        for kx in 0..window {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                continue;
                            }
                            acc += input.at(n, c, iy as usize, ix as usize);
                            count += 1;
                        }
                    }
                    *out.at_mut(n, c, oy, ox) = acc / count as f64;
                }
            }
        }
    }
    out
}

/// Largest elementwise relative error, with an absolute floor for values
/// near zero.
pub fn max_rel_err(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Random small conv instance: dims <= 8, kernel in {1,3,5}, stride 1..=2.
pub fn random_conv_case(
    rng: &mut ChaCha8Rng,
) -> (Tensor<f64>, Tensor<f64>, usize, usize) {
    let n = rng.random_range(1..=2);
    let ic = rng.random_range(1..=4);
    let oc = rng.random_range(1..=4);
    let k = [1usize, 3, 5][rng.random_range(0..3)];
    let h = rng.random_range(k.max(2)..=8);
    let w = rng.random_range(k.max(2)..=8);
    let stride = rng.random_range(1..=2);
    let pad = rng.random_range(0..=k / 2 + 1);
    let input = random_tensor(rng, n, ic, h, w, 2.0);
    let weights = random_tensor(rng, oc, ic, k, k, 1.5);
    (input, weights, stride, pad)
}
