use thiserror::Error;

pub type Result<T, E = GameError> = std::result::Result<T, E>;

/// Errors produced by the solvers, the policy backends and spec ingestion.
#[derive(Debug, Error)]
pub enum GameError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("distribution `{field}` is not on the simplex (sum = {sum})")]
    Simplex { field: String, sum: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure {
        what: String,
        iterations: usize,
        residual: f64,
        /// Last iterate, one vector per player or per state, when the solver has one.
        last_iterate: Option<Vec<Vec<f64>>>,
    },

    #[error("unsupported size: {what} is {actual}, limit is {limit}")]
    UnsupportedSize {
        what: String,
        actual: u128,
        limit: u128,
    },

    #[error("unparseable action in policy response: {text:?}")]
    UnparseableAction { text: String },

    #[error("policy endpoint unreachable: {0}")]
    EndpointUnreachable(String),

    #[error("policy endpoint protocol error: {0}")]
    Protocol(String),

    #[error("prompt `{prompt_id}` failed to evaluate: {source}")]
    Policy {
        prompt_id: String,
        #[source]
        source: Box<GameError>,
    },

    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl GameError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        GameError::InvalidInput(msg.into())
    }

    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        GameError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed user input (spec files, shapes, simplex).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            GameError::InvalidInput(_)
                | GameError::Simplex { .. }
                | GameError::Validation { .. }
                | GameError::Configuration(_)
                | GameError::UnsupportedSize { .. }
        )
    }

    pub fn is_convergence(&self) -> bool {
        matches!(self, GameError::ConvergenceFailure { .. })
    }
}
