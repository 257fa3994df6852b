use thiserror::Error;

pub type Result<T> = std::result::Result<T, EivError>;

#[derive(Debug, Error)]
pub enum EivError {
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("singular matrix")]
    SingularMatrix,

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: &'static str },

    #[error("domain error: {context}")]
    Domain { context: &'static str },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("cannot build starting values: {0}")]
    Initialization(String),

    #[error("likelihood evaluation failed: {source}")]
    Evaluation {
        #[source]
        source: Box<EivError>,
    },

    #[error("fit did not converge (full: {}, restricted: {})", .full.converged, .restricted.converged)]
    FitNotConverged {
        full: Box<crate::inference::FitResult>,
        restricted: Box<crate::inference::FitResult>,
    },

    #[error("nesting violated: restricted log-likelihood exceeds full by {excess}")]
    NestingViolation { excess: f64 },
}

impl EivError {
    pub(crate) fn evaluation(source: EivError) -> Self {
        EivError::Evaluation {
            source: Box::new(source),
        }
    }
}
