use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    /// A structural hypothesis (lower bound on Re Φ, nondegeneracy, ...) fails.
    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("quadrature did not converge ({what}); residual {residual:e}")]
    Quadrature { what: String, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown {kind} '{name}' (known: {known})")]
    Unknown {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a model hypothesis as opposed to a numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_)
                | Error::InvalidProfile(_)
                | Error::Hypothesis(_)
                | Error::Precondition(_)
                | Error::Unknown { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
