//! Image ingestion, the ±1 embedding simulator, cover/stego pairing and
//! splits, dihedral augmentation and pair-constrained batching.

pub mod augment;
pub mod batch;
pub mod embed;
pub mod image;
pub mod manifest;
pub mod synth;

pub use augment::{augment8, dihedral, transform_name, DIHEDRAL_COUNT};
pub use batch::{ImageStore, PairBatcher};
pub use embed::{change_rate_for_payload, lsbm_embed, max_payload, ternary_payload, EmbedParams};
pub use image::{encode_pgm, load_pgm, parse_pgm, save_pgm, GrayImage};
pub use manifest::{make_splits, DatasetManifest, PairRecord, Split};
pub use synth::textured_cover;
