use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: shapes {lhs:?} and {rhs:?} are not compatible")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: operand {operand} has value {value} at flat index {index}, outside the domain")]
    Domain {
        op: &'static str,
        operand: usize,
        index: usize,
        value: f64,
    },
    #[error("{op}: kernel {kernel:?} larger than padded input {padded:?}")]
    KernelTooLarge {
        op: &'static str,
        kernel: [usize; 2],
        padded: [usize; 2],
    },
    #[error("{op}: expected {expected} channels, got {actual}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("batch_norm2d: eval mode requested before any running-statistics update")]
    MissingRunningStats,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on a value that does not depend on any tracked parameter")]
    Detached,
    #[error("backward has already been run on this graph")]
    BackwardConsumed,
    #[error("operands belong to different graphs")]
    ForeignVar,
    #[error("{0}")]
    Invalid(String),
}
