//! Error type shared by every core module.

use alloc::string::String;

/// Errors produced by the core algorithms.
///
/// The CLI maps these onto process exit codes, so the split between
/// validation, data-shape, domain, and numeric failures is part of the
/// crate contract.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument or configuration failed.
    #[error("invalid {what}: {why}")]
    Validation { what: &'static str, why: String },

    /// Two operands had incompatible shapes.
    #[error("shape mismatch in {op}: ({lhs_rows}x{lhs_cols}) vs ({rhs_rows}x{rhs_cols})")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    /// An elementwise operation was applied outside its domain
    /// (log of a non-positive value, division by zero, ...).
    #[error("domain error in {op}: {why}")]
    Domain { op: &'static str, why: String },

    /// A feature row was unusable (zero norm, near-zero variance).
    #[error("degenerate feature: {0}")]
    DegenerateFeature(String),

    /// A transport plan had a row or column with no mass.
    #[error("degenerate transport plan: {0}")]
    DegeneratePlan(String),

    /// A computation produced non-finite values or failed to make
    /// numeric progress.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn validation(what: &'static str, why: impl Into<String>) -> Self {
        Error::Validation {
            what,
            why: why.into(),
        }
    }

    pub(crate) fn domain(op: &'static str, why: impl Into<String>) -> Self {
        Error::Domain {
            op,
            why: why.into(),
        }
    }
}
