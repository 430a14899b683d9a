//! Dense networks trained from scratch: forward/backward, Adam, PCA and a
//! deterministic, resumable training loop.

mod adam;
pub mod checkpoint;
mod mlp;
mod pca;
mod train;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use mlp::{Activation, Mlp};
pub use pca::{pca_fit, svd_right, PcaBasis, Retention};
pub use train::{train, EpochLog, TrainConfig, TrainState, TrainTask};

use thiserror::Error;

use crate::binio::BinError;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input width {got}, network expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("non-finite values in layer {layer}")]
    NonFinite { layer: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training diverged (task {task}, epoch {epoch})")]
    Diverged { task: usize, epoch: u64 },
    #[error("checkpoint: {0}")]
    Format(BinError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NeuralError> = std::result::Result<T, E>;
