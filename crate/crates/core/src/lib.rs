//! Spatial-domain CNN steganalysis toolkit.
//!
//! The crate bundles a self-contained rank-4 tensor engine with verified
//! gradients, the fixed 30-kernel SRM residual pre-processing bank, a
//! config-driven builder for the Yedroudj-Net topology, a cover/stego data
//! pipeline (PGM ingestion, ±1 embedding simulator, pair-constrained
//! batching, dihedral augmentation) and an SGD training/evaluation harness.

pub mod error;
pub mod data;
pub mod gradcheck;
pub mod net;
pub mod ops;
pub mod srm;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Mode, Scalar, Shape, Tensor};
