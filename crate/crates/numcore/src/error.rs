use thiserror::Error;

/// Errors surfaced by tensor construction, graph recording, backpropagation,
/// the optimizer, and checkpoint (de)serialization.
#[derive(Debug, Error)]
pub enum NumError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("{context}: data length {len} does not match shape {shape:?} (product {want})")]
    LengthMismatch {
        context: &'static str,
        shape: Vec<usize>,
        len: usize,
        want: usize,
    },

    #[error("{context}: unsupported rank {rank} (expected {expected})")]
    BadRank {
        context: &'static str,
        rank: usize,
        expected: &'static str,
    },

    #[error("{context}: {what} must be strictly positive")]
    NonPositive {
        context: &'static str,
        what: &'static str,
    },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("valid convolution window {window}x{window2} exceeds input extent {extent}")]
    WindowTooLarge {
        window: usize,
        window2: usize,
        extent: usize,
    },

    #[error("no gradient recorded for parameter '{0}' (was backward run on a loss reachable from it?)")]
    MissingGrad(String),

    #[error("optimizer state tracks {state} parameters but {given} were supplied")]
    OptimizerArity { state: usize, given: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NumError>;
