use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: line {line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("{file}: duplicate person_id `{id}` on line {line}")]
    DuplicateId { file: String, id: String, line: u64 },

    #[error("question `{question}`: unknown modality `{value}`")]
    UnknownModality { question: String, value: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} {value} out of range [0, {max}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        max: usize,
    },

    #[error("profile and questionnaire files share no person_id")]
    EmptyIntersection,

    #[error("unknown question `{0}`")]
    UnknownQuestion(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
