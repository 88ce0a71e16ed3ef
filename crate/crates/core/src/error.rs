//! Error type shared across the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Two operands cannot be combined by the named tensor operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An operation received a tensor whose shape it cannot handle.
    InvalidShape { op: &'static str, detail: String },
    /// `backward` was called on a tensor that is not a scalar.
    NonScalarLoss { shape: Vec<usize> },
    /// An optimizer step found a registered parameter without a gradient.
    MissingGrad { param: String },
    /// A row or item index is outside the valid range.
    IndexOutOfRange { index: usize, len: usize },
    /// Principal component fit could not be performed.
    Pca { message: String },
    /// A data file failed to parse.
    Parse { line: u64, message: String },
    /// The interaction file contained no rows.
    EmptyLog,
    /// A preprocessing stage removed every interaction.
    EmptyDataset { stage: &'static str },
    /// The temporal split produced no test-period interactions.
    NoPostBoundary,
    /// The temporal split produced no training-period interactions.
    NoPreBoundary,
    /// Cold items have no content vectors; lists the offending ids.
    MissingContent { item_ids: Vec<String> },
    /// An item's content vector collapsed to zero after projection.
    DegenerateContent { item_id: String },
    /// A vector had the wrong dimensionality.
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// A caller-supplied value violates a documented precondition.
    InvalidArgument { context: String },
    /// Training produced a non-finite loss.
    Divergence { epoch: usize, step: usize },
    /// An operation that needs a non-empty input received an empty one.
    EmptyInput { context: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch, lhs={lhs:?} rhs={rhs:?}")
            }
            Error::InvalidShape { op, detail } => write!(f, "{op}: {detail}"),
            Error::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Error::MissingGrad { param } => {
                write!(f, "parameter {param} has no gradient; run backward first")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::Pca { message } => write!(f, "pca: {message}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::EmptyLog => write!(f, "no interactions"),
            Error::EmptyDataset { stage } => {
                write!(f, "preprocessing stage '{stage}' removed all interactions")
            }
            Error::NoPostBoundary => write!(f, "temporal split left no test-period interactions"),
            Error::NoPreBoundary => {
                write!(f, "temporal split left no training-period interactions")
            }
            Error::MissingContent { item_ids } => {
                write!(f, "cold items missing content vectors: {}", item_ids.join(", "))
            }
            Error::DegenerateContent { item_id } => {
                write!(f, "content vector for item {item_id} is zero after projection")
            }
            Error::DimMismatch {
                context,
                expected,
                got,
            } => write!(f, "{context}: expected dimension {expected}, got {got}"),
            Error::InvalidArgument { context } => write!(f, "invalid argument: {context}"),
            Error::Divergence { epoch, step } => {
                write!(f, "non-finite loss at epoch {epoch}, step {step}")
            }
            Error::EmptyInput { context } => write!(f, "{context}: empty input"),
        }
    }
}

impl std::error::Error for Error {}
