//! The Q-value network: per-window transformer encoders, bilinear channel
//! attention over period encodings, and a linear two-action head, all in
//! plain f64 with hand-written reverse-mode gradients.

mod checkpoint;
mod network;
mod params;
pub mod tensor;

pub use checkpoint::{
    load_params, read_optimizer_container, save_params, write_optimizer_container,
};
pub use network::{
    backward, compress, encode_sequence, forward, fuse_periods, inject_flags, q_values,
    EncoderTrace, ForwardTrace,
};
pub use params::{
    sinusoidal_positions, EncoderLayerParams, EncoderParams, HyperParams, QNetworkParams,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QNetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad hyperparameters: {0}")]
    BadHyper(&'static str),
    #[error("period set must not be empty")]
    EmptyPeriodSet,
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint corrupt: {0}")]
    Format(String),
    #[error("checkpoint version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
