use std::fmt;

/// Why a single call to an expert failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpertCallError {
    Timeout,
    Status(u16),
    Transport(String),
    Body(String),
}

impl fmt::Display for ExpertCallError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpertCallError::Timeout => f.write_str("timed out"),
            ExpertCallError::Status(s) => write!(f, "HTTP {s}"),
            ExpertCallError::Transport(e) => write!(f, "transport error: {e}"),
            ExpertCallError::Body(e) => write!(f, "bad response body: {e}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("no expert available for `{label}` or any fallback")]
    NoExpertAvailable { label: String },

    #[error("all experts failed: {}", format_failures(.failures))]
    AllExpertsFailed { failures: Vec<(String, ExpertCallError)> },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] coe_core::Error),

    #[error("server error: {0}")]
    Server(#[from] std::io::Error),
}

fn format_failures(failures: &[(String, ExpertCallError)]) -> String {
    failures
        .iter()
        .map(|(m, e)| format!("{m}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}
