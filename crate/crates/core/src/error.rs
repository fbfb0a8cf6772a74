use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (n = {dim}) even after jitter {max_jitter:e}")]
    NotPositiveDefinite { dim: usize, max_jitter: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigensolver did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("negative matrix power of a singular matrix (eigenvalue {eigenvalue:e})")]
    SingularForNegativePower { eigenvalue: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("no simple {k}-regular graph on {m} vertices")]
    InfeasibleDegree { m: usize, k: usize },

    #[error("random regular graph generation failed after {restarts} restarts")]
    GenerationFailure { restarts: usize },

    #[error("graph PC bandwidth entry for vertices ({m}, {m_prime}) is {value:e}, must be positive")]
    NonpositivePEntry { m: usize, m_prime: usize, value: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid kernel spec: {0}")]
    InvalidSpec(String),

    #[error("unknown {kind} family `{name}`")]
    UnknownFamily { kind: &'static str, name: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("fitted model cache is stale; rebuild before predicting")]
    StaleCache,

    #[error("every optimizer restart failed: {0}")]
    AllRestartsFailed(String),
}

impl Error {
    /// True for failures that come from the numbers rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::ConvergenceFailure { .. }
                | Error::SingularForNegativePower { .. }
                | Error::SingularMatrix(_)
                | Error::NonpositivePEntry { .. }
                | Error::AllRestartsFailed(_)
                | Error::GenerationFailure { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
