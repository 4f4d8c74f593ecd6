//! Implicit neural representation: positional encoding, per-file latent
//! identifiers, and the residual MLP mapping encoded coordinates to density.

pub mod arch;
pub mod checkpoint;
pub mod encoding;
pub mod latent;
pub mod mlp;
mod scalar;

use thiserror::Error;

pub use arch::{AffineRole, Arch, HiddenStage};
pub use checkpoint::{encode_checkpoint, Checkpoint};
pub use encoding::{encode_batch, encode_point, positional_encode, COORD_DIM, INPUT_DIM, LATENT_DIM};
pub use latent::LatentTable;
pub use mlp::{Affine, ForwardCache, Gradients, MlpParams};
pub use scalar::Real;

#[derive(Debug, Error)]
pub enum InrError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate file id {0}")]
    DuplicateFileId(u32),
    #[error("no files to register")]
    EmptyFileList,
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}
