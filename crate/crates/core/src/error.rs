use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not conform.
    Shape { op: &'static str, detail: String },
    /// Invalid configuration value.
    Config(String),
    /// Every position of an attention distribution was masked.
    EmptyAttentionSupport,
    MissingGradient(String),
    NonDeterministic,
    /// Corpus document violates the transcript schema.
    Schema {
        meeting: String,
        path: String,
        reason: String,
    },
    Sampling(String),
    Rank { needed: usize, found: usize },
    NonFiniteLoss { epoch: usize, batch: usize },
    Clustering(String),
    UndefinedOmega,
    FeatureDim { checkpoint: usize, corpus: usize },
    Checkpoint(String),
    NoEpochs,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape mismatch in {op}: {detail}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyAttentionSupport => f.write_str("empty attention support"),
            Error::MissingGradient(name) => write!(f, "missing gradient for parameter `{name}`"),
            Error::NonDeterministic => {
                f.write_str("non-deterministic closure: two evaluations at the same point differ")
            }
            Error::Schema {
                meeting,
                path,
                reason,
            } => write!(f, "meeting `{meeting}`, field `{path}`: {reason}"),
            Error::Sampling(msg) => write!(f, "sampling: {msg}"),
            Error::Rank { needed, found } => {
                write!(f, "data rank {found} is below the requested {needed} components")
            }
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            Error::Clustering(msg) => write!(f, "clustering: {msg}"),
            Error::UndefinedOmega => f.write_str("undefined omega"),
            Error::FeatureDim { checkpoint, corpus } => write!(
                f,
                "feature dimension mismatch: checkpoint expects {checkpoint}, corpus provides {corpus}"
            ),
            Error::Checkpoint(msg) => write!(f, "checkpoint: {msg}"),
            Error::NoEpochs => f.write_str("no epochs were run; best epoch is undefined"),
        }
    }
}

impl core::error::Error for Error {}
