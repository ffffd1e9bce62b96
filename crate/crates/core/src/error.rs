use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("interchange parse error in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("gateway failed after {attempts} attempt(s): {message}")]
    Gateway { attempts: u32, message: String },

    #[error("gateway returned an empty completion")]
    EmptyResponse,

    #[error("unparseable completion: {message}")]
    Format { message: String, raw: String },

    #[error("no extracted sentence could be aligned to the document")]
    Alignment,

    #[error("entailment backend failed on sentence {sentence}: {message}")]
    Backend { sentence: usize, message: String },

    #[error("retrieval failed: {0}")]
    Retrieval(String),

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("record {id}: {source}")]
    InRecord {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the language-model gateway or the retrieval client.
    pub fn is_remote(&self) -> bool {
        match self {
            Error::Gateway { .. }
            | Error::EmptyResponse
            | Error::Backend { .. }
            | Error::Retrieval(_) => true,
            Error::InRecord { source, .. } => source.is_remote(),
            _ => false,
        }
    }
}
