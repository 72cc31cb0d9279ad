//! ±1 embedding simulator.
//!
//! Stand-in stego source: each pixel is changed independently with
//! probability β, equiprobably +1/−1 (forced inward at 0 and 255). The
//! change rate is tied to a payload R (bits per pixel) through the ternary
//! entropy equation `H2(β) + β = R`, so a requested payload produces the
//! change rate an optimal ternary code would need. Externally generated
//! stego images can be used instead via the manifest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image::GrayImage;
use crate::error::{Error, Result};

/// Maximum payload of ternary embedding, log2(3) bpp.
pub fn max_payload() -> f64 {
    3.0f64.log2()
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Payload capacity (bpp) of ±1 embedding at change rate β.
pub fn ternary_payload(beta: f64) -> f64 {
    binary_entropy(beta) + beta
}

/// Solve `H2(β) + β = R` for β by bisection on [0, 2/3]; the equation is
/// strictly monotone there. The residual satisfies `|H(β) − R| <= 1e-9`.
pub fn change_rate_for_payload(rate_bpp: f64) -> Result<f64> {
    if !rate_bpp.is_finite() || rate_bpp < 0.0 || rate_bpp > max_payload() {
        return Err(Error::InvalidArgument {
            op: "change_rate_for_payload",
            msg: format!("payload {rate_bpp} outside [0, log2(3)]"),
        });
    }
    if rate_bpp == 0.0 {
        return Ok(0.0);
    }
    // the payload curve is flat at its maximum, so pin the endpoint
    if rate_bpp >= max_payload() {
        return Ok(2.0 / 3.0);
    }
    let (mut lo, mut hi) = (0.0f64, 2.0 / 3.0);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if ternary_payload(mid) < rate_bpp {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    debug_assert!((ternary_payload(beta) - rate_bpp).abs() <= 1e-9);
    Ok(beta)
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedParams {
    pub rate_bpp: f64,
    pub beta: f64,
    pub seed: u64,
}

impl EmbedParams {
    pub fn from_payload(rate_bpp: f64, seed: u64) -> Result<Self> {
        Ok(EmbedParams {
            rate_bpp,
            beta: change_rate_for_payload(rate_bpp)?,
            seed,
        })
    }
}

/// One random draw per pixel, in index order, so the result is a pure
/// function of (seed, pixel index). Pixels at 0 change to +1 and at 255 to
/// −1, keeping the realized change rate at β.
pub fn lsbm_embed(cover: &GrayImage, p: &EmbedParams) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut stego = cover.clone();
    for pix in stego.pixels_mut() {
        let draw = rand::RngCore::next_u64(&mut rng);
        let plus = draw & 1 == 1;
        let u = (draw >> 11) as f64 / (1u64 << 53) as f64;
        if u < p.beta {
            *pix = match *pix {
                0 => 1,
                255 => 254,
                v if plus => v + 1,
                v => v - 1,
            };
        }
    }
    stego
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cover(seed: u64, n: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<u8> = (0..n * n)
            .map(|_| (rand::RngCore::next_u32(&mut rng) % 256) as u8)
            .collect();
        GrayImage::new(n, n, pixels).unwrap()
    }

    #[test]
    fn zero_payload_is_identity() {
        let c = cover(1, 32);
        let p = EmbedParams::from_payload(0.0, 7).unwrap();
        assert_eq!(lsbm_embed(&c, &p), c);
    }

    #[test]
    fn max_payload_gives_two_thirds() {
        let beta = change_rate_for_payload(max_payload()).unwrap();
        assert!((beta - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn changes_are_plus_minus_one_and_in_range() {
        let c = cover(2, 64);
        let p = EmbedParams::from_payload(1.0, 99).unwrap();
        let s = lsbm_embed(&c, &p);
        for (&a, &b) in c.pixels().iter().zip(s.pixels()) {
            let d = (a as i16 - b as i16).abs();
            assert!(d <= 1, "pixel moved by {d}");
        }
    }

    #[test]
    fn boundary_pixels_move_inward() {
        let mut pixels = vec![0u8; 64 * 64];
        pixels[2048..].fill(255);
        let c = GrayImage::new(64, 64, pixels).unwrap();
        let p = EmbedParams::from_payload(max_payload(), 3).unwrap();
        let s = lsbm_embed(&c, &p);
        for (&a, &b) in c.pixels().iter().zip(s.pixels()) {
            if a != b {
                if a == 0 {
                    assert_eq!(b, 1);
                } else {
                    assert_eq!(b, 254);
                }
            }
        }
        // at beta = 2/3 a substantial fraction must have changed
        let changed = c
            .pixels()
            .iter()
            .zip(s.pixels())
            .filter(|(a, b)| a != b)
            .count();
        assert!(changed > 64 * 64 / 2);
    }

    #[test]
    fn change_fraction_within_three_sigma() {
        let c = cover(5, 256);
        let p = EmbedParams::from_payload(0.4, 11).unwrap();
        let s = lsbm_embed(&c, &p);
        let n = (256 * 256) as f64;
        let changed = c
            .pixels()
            .iter()
            .zip(s.pixels())
            .filter(|(a, b)| a != b)
            .count() as f64;
        let sigma = (p.beta * (1.0 - p.beta) / n).sqrt();
        assert!(
            (changed / n - p.beta).abs() <= 3.0 * sigma,
            "fraction {} vs beta {}",
            changed / n,
            p.beta
        );
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let c = cover(8, 48);
        let p = EmbedParams::from_payload(0.4, 42).unwrap();
        assert_eq!(lsbm_embed(&c, &p), lsbm_embed(&c, &p));
    }

    #[test]
    fn payload_out_of_range_rejected() {
        assert!(change_rate_for_payload(-0.1).is_err());
        assert!(change_rate_for_payload(1.6).is_err());
        assert!(change_rate_for_payload(f64::NAN).is_err());
    }

    #[test]
    fn monotone_in_payload() {
        let mut last = 0.0;
        for i in 1..=15 {
            let r = max_payload() * (i as f64 / 15.0);
            let beta = change_rate_for_payload(r).unwrap();
            assert!(beta > last);
            last = beta;
        }
    }
}
