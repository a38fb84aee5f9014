use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The marginal (or tail) mass at `z` is numerically zero, so posterior
    /// quantities are undefined there.
    #[error("degenerate point z = {z}: {what} is numerically zero")]
    DegeneratePoint { z: f64, what: &'static str },

    #[error("insufficient data: need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("empirical null fit failed: {0}; use the theoretical null instead")]
    EmpiricalNullFailure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("refusing to overwrite {0} (pass --force)")]
    OutputExists(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code: 1 for validation problems, 2 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegeneratePoint { .. } | Error::EmpiricalNullFailure(_) | Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be finite, got {x}")))
    }
}

pub(crate) fn ensure_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {x}")))
    }
}
