use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("regime error for q={q}, H={hurst}: {reason}")]
    Regime { q: u32, hurst: f64, reason: String },

    #[error("synthesis failed for H={hurst}, n={n}: {reason}")]
    Synthesis {
        hurst: f64,
        n: usize,
        reason: String,
    },

    #[error(
        "budget exceeded at epsilon={epsilon}: needs n_trunc={n_trunc} (cap {max_n}) and \
         {replicas_needed} replicas (budget {budget})"
    )]
    BudgetExceeded {
        epsilon: f64,
        n_trunc: u64,
        max_n: u64,
        replicas_needed: u64,
        budget: u64,
    },

    #[error("no moment order p <= {max_order} gives a convergent truncation bound")]
    NoConvergence { max_order: u32 },

    #[error("degenerate fit: {reason}")]
    DegenerateFit { reason: String },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("malformed reference sample {path}: {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn regime(q: u32, hurst: f64, reason: impl Into<String>) -> Self {
        Error::Regime {
            q,
            hurst,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }

    /// Structured form written to standard error by the command-line front end.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "detail": self,
            "message": self.to_string(),
        })
        .to_string()
    }
}
