use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {lhs} vs {rhs} ({context})")]
    Shape {
        lhs: String,
        rhs: String,
        context: &'static str,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("loss has no supervised positions")]
    EmptyLoss,
    #[error("finite-difference probe produced a non-finite value at coordinate {index}")]
    Oracle { index: usize },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("record {record} has packed length {length}, exceeding batch budget {budget}")]
    Capacity {
        record: String,
        length: usize,
        budget: usize,
    },
    #[error("training error: {0}")]
    Training(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("generation aborted by token consumer after {} ids: {reason}", partial.speech_ids.len())]
    ConsumerAborted {
        reason: String,
        partial: Box<crate::decoder::GenerationResult>,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        lhs: impl std::fmt::Debug,
        rhs: impl std::fmt::Debug,
        context: &'static str,
    ) -> Self {
        Error::Shape {
            lhs: format!("{lhs:?}"),
            rhs: format!("{rhs:?}"),
            context,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
