//! Error type shared across the crate.

use crate::model::Violation;

/// Crate-wide error type.
///
/// Variants map one-to-one onto the CLI exit codes: `Parse`/`Io` -> 2,
/// `InvalidModel` -> 3, `Numerical` -> 4, `SizeGuard` -> 5.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The model failed invariant validation. Violations list every offence.
    #[error("invalid model:\n{}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    /// A model or data file could not be parsed.
    #[error("parse error in {file}: {detail}")]
    Parse { file: String, detail: String },

    /// A numerical operation failed; `t` is the 1-based time step.
    #[error("numerical failure at t={t} in {op}: {detail}")]
    Numerical {
        t: usize,
        op: &'static str,
        detail: String,
    },

    /// The dense joint-Gaussian oracle would exceed its size guard.
    #[error("joint dimension {dim} exceeds the dense-conditioning guard of {max}")]
    SizeGuard { dim: usize, max: usize },

    /// Inputs have inconsistent shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside its allowed range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}
