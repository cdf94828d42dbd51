use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An operand had the wrong shape.
    DimensionMismatch {
        op: &'static str,
        operand: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// An input that must be non-empty was empty.
    Empty(&'static str),
    /// A probability outside its permitted range.
    InvalidProbability { what: &'static str, value: f64 },
    /// A token id outside the vocabulary.
    IdOutOfRange { id: usize, size: usize },
    InvalidConfig(String),
    /// Decoding was asked to step from a state that was never initialised.
    UninitializedState,
    /// Two models (or a model and a corpus) disagree about a vocabulary.
    VocabularyMismatch(String),
    HiddenSizeMismatch { expected: usize, found: usize },
    /// Training produced a NaN or infinite loss.
    NonFiniteLoss { epoch: usize, minibatch: usize },
    UnknownBlock(String),
    MissingBlock(String),
    MissingFeature(String),
    Parse { line: usize, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                op,
                operand,
                expected,
                found,
            } => write!(
                f,
                "{op}: operand `{operand}` has shape {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Error::Empty(what) => write!(f, "{what} must not be empty"),
            Error::InvalidProbability { what, value } => {
                write!(f, "{what} = {value} is not a valid probability here")
            }
            Error::IdOutOfRange { id, size } => {
                write!(f, "token id {id} out of range for vocabulary of size {size}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::UninitializedState => write!(f, "decoder state was not initialised by encode"),
            Error::VocabularyMismatch(msg) => write!(f, "vocabulary mismatch: {msg}"),
            Error::HiddenSizeMismatch { expected, found } => {
                write!(f, "hidden size mismatch: expected {expected}, found {found}")
            }
            Error::NonFiniteLoss { epoch, minibatch } => write!(
                f,
                "non-finite loss in epoch {epoch}, minibatch {minibatch}"
            ),
            Error::UnknownBlock(name) => write!(
                f,
                "unknown parameter block `{name}`; valid blocks: {}",
                crate::model::BlockName::ALL
                    .iter()
                    .map(|b| b.as_str())
                    .collect::<alloc::vec::Vec<_>>()
                    .join(", ")
            ),
            Error::MissingBlock(name) => write!(f, "missing parameter block `{name}`"),
            Error::MissingFeature(name) => write!(f, "missing feature `{name}`"),
            Error::Parse { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

impl core::error::Error for Error {}
