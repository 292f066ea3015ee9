use thiserror::Error;

use crate::copula::Family;

/// Errors raised across the screening pipeline.
#[derive(Debug, Error)]
pub enum PasError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("kendall tau {tau} is not attainable by the {family} family")]
    FamilyIncompatible { family: Family, tau: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("probability {poe} lies outside the distribution support [{lo}, {hi}]")]
    Extrapolation { poe: f64, lo: f64, hi: f64 },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("candidate pool exhausted after {used} samples")]
    PoolExhausted { used: usize },

    #[error("high-fidelity evaluation failed for event {event_id}: {reason}")]
    HfEvaluation { event_id: u64, reason: String },

    #[error("timed out waiting for high-fidelity response for event {event_id}")]
    HfTimeout { event_id: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PasError>;
