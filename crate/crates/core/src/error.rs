//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its mathematical domain (e.g. visibility > 1).
    #[error("domain error: {0}")]
    Domain(String),

    /// A signal value or interpolation target lies outside the covered range.
    #[error("range error: {0}")]
    Range(String),

    /// Structural validation failure of an input dataset or argument.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Outcome probabilities of a probe do not sum to one.
    #[error("outcome probabilities are not normalized (deficit {deficit:e})")]
    Normalization { deficit: f64 },

    /// The effective phase Fisher information vanishes.
    #[error("phase unidentifiable: effective Fisher information is zero")]
    Unidentifiable,

    /// Observed counts cannot be produced by the model anywhere on the support.
    #[error("data impossible under model: setting {setting} has counts but zero probability on the whole support")]
    ImpossibleData { setting: usize },

    /// Estimate and reference are not sampled on the same grid.
    #[error("grid mismatch at x = {x}")]
    GridMismatch { x: f64 },

    /// Adaptive quadrature failed to reach its tolerance.
    #[error("quadrature did not converge on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },

    /// Configuration text could not be parsed or violates a constraint.
    #[error("config line {line}: key `{key}`: {message}")]
    Config { line: usize, key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// `2` covers data and validation problems, `3` numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Unidentifiable | Error::Quadrature { .. } | Error::Normalization { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
