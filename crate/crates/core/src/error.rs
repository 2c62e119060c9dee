use std::path::PathBuf;

use chrono::{DateTime, Utc};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("measurement of shipment {shipment_id} at {timestamp} has no environment tag")]
    Untagged {
        shipment_id: String,
        timestamp: DateTime<Utc>,
    },

    #[error("geofile feature {index}: {reason}")]
    Geometry { index: usize, reason: String },

    #[error("geofile: {0}")]
    Geofile(String),

    #[error("{quantity} out of domain: {value}")]
    Domain { quantity: &'static str, value: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("feature `{0}` missing from input vector")]
    MissingFeature(String),

    #[error("residuals requested on ocean segment {0}")]
    OceanSegment(String),

    #[error("out-of-order residual: {got} precedes last seen {last}")]
    OutOfOrder {
        last: DateTime<Utc>,
        got: DateTime<Utc>,
    },

    #[error("look-ahead: history point at {history} is not before query time {query}")]
    LookAhead {
        history: DateTime<Utc>,
        query: DateTime<Utc>,
    },

    #[error("training set has no {0} rows")]
    NoRows(&'static str),

    #[error("config hash mismatch: expected {expected}, found {found}")]
    ConfigMismatch { expected: String, found: String },

    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },

    #[error("shipment {0} has no recorded synthetic ground truth")]
    NotSynthetic(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::MissingColumn(_) => "missing_column",
            Error::Untagged { .. } => "untagged",
            Error::Geometry { .. } => "geometry",
            Error::Geofile(_) => "geofile",
            Error::Domain { .. } => "domain",
            Error::EmptyInput(_) => "empty_input",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::MissingFeature(_) => "missing_feature",
            Error::OceanSegment(_) => "ocean_segment",
            Error::OutOfOrder { .. } => "out_of_order",
            Error::LookAhead { .. } => "look_ahead",
            Error::NoRows(_) => "no_rows",
            Error::ConfigMismatch { .. } => "config_mismatch",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::NotSynthetic(_) => "not_synthetic",
            Error::InvalidConfig(_) => "invalid_config",
        }
    }
}
