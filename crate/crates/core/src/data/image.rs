//! 8-bit grayscale images and binary PGM (P5, maxval 255) round-trips.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    h: usize,
    w: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(h: usize, w: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != h * w {
            return Err(Error::InvalidArgument {
                op: "GrayImage::new",
                msg: format!("{}x{} image needs {} pixels, got {}", h, w, h * w, pixels.len()),
            });
        }
        Ok(GrayImage { h, w, pixels })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.pixels[y * self.w + x]
    }

    /// Raw pixel values in [0,255] as one `(1,1,h,w)` tensor plane. No
    /// centering or scaling is applied before the residual filters.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.pixels.iter().map(|&p| T::from_f64(p as f64)).collect();
        Tensor::from_vec(1, 1, self.h, self.w, data).expect("sizes agree")
    }

    /// Copy pixels into a channel plane of a prepared batch tensor.
    pub fn write_plane<T: Scalar>(&self, dst: &mut [T]) {
        debug_assert_eq!(dst.len(), self.pixels.len());
        for (d, &p) in dst.iter_mut().zip(&self.pixels) {
            *d = T::from_f64(p as f64);
        }
    }
}

/// Parse a binary PGM. Only `P5` with maxval 255 is accepted; `P2`/`P6` and
/// other PNM variants are rejected by name.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::PgmHeader("file shorter than a magic number".into()));
    }
    let magic = &bytes[..2];
    if magic != b"P5" {
        if magic[0] == b'P' && (magic[1] as char).is_ascii_alphanumeric() {
            return Err(Error::PgmVariant(
                String::from_utf8_lossy(magic).into_owned(),
            ));
        }
        return Err(Error::PgmHeader("missing PNM magic number".into()));
    }

    let mut pos = 2usize;
    let mut fields = [0u32; 3]; // width, height, maxval
    for field in fields.iter_mut() {
        // skip whitespace and '#' comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(Error::PgmHeader("header ends before all fields".into())),
            }
        }
        let start = pos;
        while let Some(b) = bytes.get(pos) {
            if b.is_ascii_digit() {
                pos += 1;
            } else {
                break;
            }
        }
        if pos == start {
            return Err(Error::PgmHeader(format!(
                "expected a decimal field at byte {start}"
            )));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ascii");
        *field = text
            .parse()
            .map_err(|_| Error::PgmHeader(format!("field {text:?} out of range")))?;
    }
    // exactly one whitespace byte separates the maxval from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::PgmHeader(
                "missing whitespace between header and payload".into(),
            ))
        }
    }

    let (w, h, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
    if maxval != 255 {
        return Err(Error::PgmMaxval(maxval));
    }
    if w == 0 || h == 0 {
        return Err(Error::PgmHeader(format!("degenerate size {w}x{h}")));
    }
    let expected = w * h;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::PgmShortPayload {
            expected,
            found: payload.len(),
        });
    }
    GrayImage::new(h, w, payload[..expected].to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.w, img.h).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_pgm(&bytes)
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path.display().to_string(), e))
}
