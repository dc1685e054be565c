use thiserror::Error;

use crate::recon::FitResult;

pub type Result<T> = std::result::Result<T, QptError>;

#[derive(Debug, Error)]
pub enum QptError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A process matrix flagged as unconstrained was passed where a physical one is required.
    #[error("unphysical process matrix: {0}")]
    Unphysical(String),

    #[error("missing tomography settings: {}", format_pairs(.0))]
    MissingSettings(Vec<(String, String)>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The penalty schedule ran out before the trace-preservation defect met its threshold.
    /// Carries the best fit found so callers can still inspect or save it.
    #[error(
        "reconstruction did not converge: tp_defect {:.3e} after the penalty schedule",
        .0.tp_defect_final
    )]
    Convergence(Box<FitResult>),

    #[error("internal error: {0}")]
    Internal(String),
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(i, a)| format!("({i},{a})"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(QptError::InvalidArgument(msg.into()))
}
