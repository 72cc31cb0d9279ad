//! The 8 dihedral transforms (flips and right-angle rotations): pure pixel
//! permutations, no interpolation. Covers and their stegos must receive the
//! same transform index to stay label-consistent.

use super::image::GrayImage;

pub const DIHEDRAL_COUNT: usize = 8;

const NAMES: [&str; DIHEDRAL_COUNT] = [
    "id", "rot90", "rot180", "rot270", "flip", "flip90", "flip180", "flip270",
];

/// Stable suffix for materialized files.
pub fn transform_name(index: usize) -> &'static str {
    NAMES[index]
}

fn rot90(img: &GrayImage) -> GrayImage {
    let (h, w) = (img.h(), img.w());
    let mut out = vec![0u8; h * w];
    // clockwise: out(y, x) = in(h-1-x, y), output is w×h
    for y in 0..w {
        for x in 0..h {
            out[y * h + x] = img.at(h - 1 - x, y);
        }
    }
    GrayImage::new(w, h, out).expect("same pixel count")
}

fn flip_h(img: &GrayImage) -> GrayImage {
    let (h, w) = (img.h(), img.w());
    let mut out = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = img.at(y, w - 1 - x);
        }
    }
    GrayImage::new(h, w, out).expect("same pixel count")
}

/// Transform `index`: 0..=3 rotate clockwise by 90°·index; 4..=7 rotate then
/// mirror horizontally.
pub fn dihedral(img: &GrayImage, index: usize) -> GrayImage {
    assert!(index < DIHEDRAL_COUNT, "dihedral index {index} out of range");
    let mut out = img.clone();
    for _ in 0..(index % 4) {
        out = rot90(&out);
    }
    if index >= 4 {
        out = flip_h(&out);
    }
    out
}

/// All 8 transforms, indexed identity-first.
pub fn augment8(img: &GrayImage) -> Vec<GrayImage> {
    (0..DIHEDRAL_COUNT).map(|i| dihedral(img, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_image(seed: u64, h: usize, w: usize) -> GrayImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..h * w)
            .map(|_| (rand::RngCore::next_u32(&mut rng) % 256) as u8)
            .collect();
        GrayImage::new(h, w, pixels).unwrap()
    }

    #[test]
    fn rot90_four_times_is_identity() {
        let img = random_image(1, 13, 7);
        let mut out = img.clone();
        for _ in 0..4 {
            out = rot90(&out);
        }
        assert_eq!(out, img);
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = random_image(2, 9, 11);
        assert_eq!(flip_h(&flip_h(&img)), img);
    }

    #[test]
    fn rot90_small_golden() {
        // [1 2 3; 4 5 6] rotated clockwise -> [4 1; 5 2; 6 3]
        let img = GrayImage::new(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let r = rot90(&img);
        assert_eq!((r.h(), r.w()), (3, 2));
        assert_eq!(r.pixels(), &[4, 1, 5, 2, 6, 3]);
    }

    #[test]
    fn eight_transforms_pairwise_distinct_on_generic_image() {
        let img = random_image(3, 16, 16);
        let outs = augment8(&img);
        assert_eq!(outs.len(), 8);
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(outs[i], outs[j], "{} == {}", NAMES[i], NAMES[j]);
            }
        }
    }

    #[test]
    fn transforms_are_pixel_permutations() {
        let img = random_image(4, 12, 10);
        let mut sorted = img.pixels().to_vec();
        sorted.sort_unstable();
        for out in augment8(&img) {
            let mut s = out.pixels().to_vec();
            s.sort_unstable();
            assert_eq!(s, sorted);
        }
    }

    #[test]
    fn identity_is_index_zero() {
        let img = random_image(5, 8, 8);
        assert_eq!(dihedral(&img, 0), img);
    }
}
