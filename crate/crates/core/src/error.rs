use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluxError {
    #[error("density {0} outside [0, 1]")]
    Domain(f64),
    #[error("flux {phi} exceeds the maximal flux {fmax}")]
    InfeasibleFlux { phi: f64, fmax: f64 },
    #[error("derivative at the kink {0} needs a side selector")]
    AtKink(f64),
    #[error("invalid flux parameter: {0}")]
    Parameter(String),
}

/// Configuration errors carry the JSON path of the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("malformed document: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    pub(crate) fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error("event budget of {limit} exhausted; last events:\n{recent}")]
    Runaway { limit: u64, recent: String },
    #[error("time {t} outside the current inter-event interval [{from}, {to}]")]
    OutsideInterval { t: f64, from: f64, to: f64 },
    #[error("horizon {horizon} lies before the current time {now}")]
    Backwards { horizon: f64, now: f64 },
    #[error("engine invariant violated at event {event}: {detail}")]
    Inconsistent { event: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("snapshots describe different networks: {0}")]
    NetworkMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario parameter {name} = {value} out of range: {expected}")]
    Range { name: &'static str, value: f64, expected: &'static str },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Flux(#[from] FluxError),
}
