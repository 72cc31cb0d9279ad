//! Synthetic textured covers for desk-scale runs: seeded value noise
//! (a coarse random grid, bilinearly upsampled), quantized to 8 bits.
//! Smooth content keeps the high-pass residuals small, so ±1 embedding
//! changes are statistically visible the way they are on photographs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image::GrayImage;

const CELL: usize = 8;

/// Deterministic textured cover of the given size.
pub fn textured_cover(h: usize, w: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gh = h.div_ceil(CELL) + 1;
    let gw = w.div_ceil(CELL) + 1;
    let grid: Vec<f64> = (0..gh * gw)
        .map(|_| 20.0 + 216.0 * uniform(&mut rng))
        .collect();

    let mut pixels = Vec::with_capacity(h * w);
    for y in 0..h {
        let gy = y / CELL;
        let fy = (y % CELL) as f64 / CELL as f64;
        for x in 0..w {
            let gx = x / CELL;
            let fx = (x % CELL) as f64 / CELL as f64;
            let v00 = grid[gy * gw + gx];
            let v01 = grid[gy * gw + gx + 1];
            let v10 = grid[(gy + 1) * gw + gx];
            let v11 = grid[(gy + 1) * gw + gx + 1];
            let top = v00 + (v01 - v00) * fx;
            let bottom = v10 + (v11 - v10) * fx;
            let v = top + (bottom - top) * fy;
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(h, w, pixels).expect("sizes agree")
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rand::RngCore::next_u64(rng) >> 11) as f64 / (1u64 << 53) as f64
}
