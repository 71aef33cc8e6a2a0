use std::path::PathBuf;

/// Errors produced by the core pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("query `{query_id}` is missing a score for model `{model}`")]
    MissingScore { query_id: String, model: String },

    #[error("query `{query_id}` has a score for unknown model `{model}`")]
    UnknownModel { query_id: String, model: String },

    #[error("duplicate query_id `{0}`")]
    DuplicateQuery(String),

    #[error("score {value} for `{context}` is outside [0, 1]")]
    ScoreOutOfRange { context: String, value: f64 },

    #[error("invalid leaderboard: {0}")]
    InvalidLeaderboard(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid router params: {0}")]
    InvalidParams(String),

    #[error("invalid train config: {0}")]
    InvalidConfig(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("subject `{0}` is not present in the leaderboard")]
    UnknownSubject(String),

    #[error("policy references models not in the matrix: {0:?}")]
    UnknownPolicyModels(Vec<String>),

    #[error("train and test matrices share {0} model(s); at least 2 are required for routing")]
    TooFewSharedModels(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, message: impl ToString) -> Self {
        Error::Malformed {
            line,
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
