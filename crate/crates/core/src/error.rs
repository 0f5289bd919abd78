use thiserror::Error;

pub type Result<T> = std::result::Result<T, PlaError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlaError {
    #[error("{name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A log tag-power ratio fell outside the open interval (0, ln R).
    #[error("k[{index}] = {value} outside open interval ({lower}, {upper})")]
    OutOfBox {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("thresholds must be strictly increasing (violated at index {index})")]
    NotIncreasing { index: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Even with the whole budget on the message and no tag power, the
    /// message-SER bound stays above δ.
    #[error("delta = {delta:e} unreachable: smallest achievable message-SER bound is {min_bound:e}")]
    DeltaUnreachable { delta: f64, min_bound: f64 },
}

impl PlaError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        PlaError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(PlaError::invalid(name, format!("must be finite, got {value}")))
    }
}
