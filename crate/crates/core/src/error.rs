use thiserror::Error;

pub type Result<T, E = EsnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EsnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("reservoir draw has spectral radius 0 ({nonzeros} nonzero weights out of {total}); regenerate with another seed or a higher connectivity")]
    DegenerateDraw { nonzeros: usize, total: usize },

    #[error("near-defective matrix: eigenvector basis condition estimate {cond:.3e} exceeds {limit:.1e}; closest eigenvalues {cluster}")]
    NearDefective {
        cond: f64,
        limit: f64,
        cluster: String,
    },

    #[error("eigendecomposition did not converge")]
    EigenFailure,

    #[error("basis mismatch: readout is in {readout} basis but states are in {states} basis")]
    BasisMismatch {
        readout: &'static str,
        states: &'static str,
    },

    #[error("feedback is enabled: {0}")]
    FeedbackUnsupported(&'static str),

    #[error("{0}")]
    MissingReadout(&'static str),

    #[error("input weight lane {lane} is zero; composite readout cannot be mapped back")]
    ZeroInputWeight { lane: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EsnError::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
