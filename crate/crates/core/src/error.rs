use thiserror::Error;

use crate::solvers::SolveReport;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("spectral gap closed near t = {t} (gap {gap:.3e})")]
    GapClosed { t: f64, gap: f64 },

    #[error("index {index} out of range for {len} levels")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("log-log fit needs strictly positive data")]
    NonPositive,

    #[error("trajectories share no sample times")]
    NoCommonTimes,

    #[error("loss of unitarity: deviation {0:.3e}")]
    Unitarity(f64),

    #[error("fixed-point solve did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual)]
    SolverDiverged(SolveReport),

    #[error("solution blew up (norm {0:.3e})")]
    BlowUp(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NotHermitian(_)
                | Error::GapClosed { .. }
                | Error::NoCommonTimes
                | Error::Unitarity(_)
                | Error::SolverDiverged(_)
                | Error::BlowUp(_)
        )
    }

    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
