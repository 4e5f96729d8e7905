use thiserror::Error;

/// A scenario or argument that does not describe a valid model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("kernel infimum on ball of radius {radius} is not positive ({value:e})")]
    NonPositiveInfimum { radius: f64, value: f64 },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Delayed-state query outside the recorded time range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("lookup at t={t} outside recorded range [{start}, {end}] (entity {entity})")]
pub struct LookupError {
    pub t: f64,
    pub start: f64,
    pub end: f64,
    pub entity: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("non-finite state at t={t} for entity {entity}")]
    NonFinite { t: f64, entity: usize },
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("time {t} is not on the trajectory grid")]
    OffGrid { t: f64 },
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
