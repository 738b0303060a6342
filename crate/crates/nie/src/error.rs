use thiserror::Error;

use crate::model::Level;

/// Errors produced by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NieError {
    #[error("level {0} has zero total decay rate")]
    ZeroDecayRate(Level),
    #[error("scheme kind does not support this operation")]
    UnsupportedScheme,
    #[error("population system is numerically singular (|X1 X2 - X3 X4| below guard)")]
    DegenerateSystem,
    #[error("zero-field population difference vanishes; normalized susceptibility undefined")]
    NormalizationUndefined,
    #[error("non-finite value at quadrature node z = {0}")]
    NonFinite(f64),
    #[error("gain never reaches the cavity loss in the scanned range")]
    NoBracket,
    #[error("AWI classification not applicable to this scheme")]
    NotApplicable,
    #[error("steady state not reached after {0} integration steps")]
    NoConvergence(usize),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("scan regime is incompatible with the preset scheme")]
    IncompatibleRegime,
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("preset parse error: {0}")]
    Parse(String),
    #[error("scan point {index} ({variable} = {value}): {source}")]
    AtScanPoint {
        index: usize,
        variable: String,
        value: f64,
        #[source]
        source: Box<NieError>,
    },
}

pub type Result<T> = std::result::Result<T, NieError>;
