use thiserror::Error;

use crate::model::Variant;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A configuration value violates its invariant. `key` names the offending field.
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },

    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("expected a {expected:?} state, got {got:?}")]
    VariantMismatch { expected: Variant, got: Variant },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("outside the domain: {0}")]
    Domain(String),

    #[error("synthesis failed: {0}")]
    Synthesis(String),

    #[error("Riccati residual {residual:.3e} above tolerance {tol:.1e}")]
    Residual { residual: f64, tol: f64 },

    #[error("filter diverged at step {step}")]
    FilterDivergence { step: usize },
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// True for configuration problems, false for numerical failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. } | Error::Dimension { .. } | Error::VariantMismatch { .. }
        )
    }
}
