use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An operation produced NaN or an infinity.
    NonFinite { op: &'static str },
    /// A replaying tape's gate pattern does not fit the computation.
    GatePattern { op: &'static str, reason: &'static str },
    /// `backward` was called on a tensor that is not 1x1.
    NonScalarLoss { shape: (usize, usize) },
    InvalidGraph(String),
    InvalidArgument(String),
    /// The split cannot give every class a labeled graph.
    DatasetTooSmall { graphs: usize, classes: usize },
    InvalidLabel { label: usize, num_classes: usize },
    /// Training produced a non-finite loss.
    Divergence { epoch: usize, step: u64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            Error::GatePattern { op, reason } => write!(f, "gate pattern cannot be replayed at {op}: {reason}"),
            Error::NonScalarLoss { shape } => {
                write!(f, "backward needs a 1x1 loss, got {}x{}", shape.0, shape.1)
            }
            Error::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DatasetTooSmall { graphs, classes } => write!(
                f,
                "dataset of {graphs} graphs is too small to label every one of {classes} classes"
            ),
            Error::InvalidLabel { label, num_classes } => {
                write!(f, "label {label} out of range for {num_classes} classes")
            }
            Error::Divergence { epoch, step } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}, step {step}")
            }
        }
    }
}

impl core::error::Error for Error {}
