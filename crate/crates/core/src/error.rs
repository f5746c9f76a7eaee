use std::io;

use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op}: rank mismatch: expected {expected}-d tensor, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },

    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("{0}: input contains non-finite values")]
    NonFinite(&'static str),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stability guard violated for {channel}: D*dt/h^2 = {value:.6} > 0.25 (D={diffusivity}, dt={dt}, h={spacing})")]
    Unstable {
        channel: &'static str,
        diffusivity: f64,
        dt: f64,
        spacing: f64,
        value: f64,
    },

    #[error("blow-up: non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("training diverged: {consecutive} consecutive blown-up windows (last at epoch {epoch})")]
    Diverged { consecutive: usize, epoch: usize },

    #[error("undefined correlation: both inputs have zero variance")]
    UndefinedCorrelation,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error("size mismatch: header declares {declared} values, payload holds {actual}")]
    SizeMismatch { declared: usize, actual: usize },

    #[error("checkpoint parameter mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
