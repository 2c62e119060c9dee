//! Residual points and the batch form of the selection schemes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSource {
    /// Residual of a live land measurement.
    Observed,
    /// Correction previously emitted for an ocean measurement.
    Recursive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub timestamp: Timestamp,
    pub segment_id: String,
    pub value: f64,
    pub source: ResidualSource,
}

/// Which past residuals feed the weighting function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScheme {
    /// Latest contiguous land segment only.
    Local,
    /// Every land residual of the shipment.
    Global,
    /// Land residuals plus corrections fed back from ocean predictions.
    Recursive,
}

impl SelectionScheme {
    pub const ALL: [SelectionScheme; 3] = [
        SelectionScheme::Local,
        SelectionScheme::Global,
        SelectionScheme::Recursive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionScheme::Local => "local",
            SelectionScheme::Global => "global",
            SelectionScheme::Recursive => "recursive",
        }
    }
}

impl fmt::Display for SelectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SelectionScheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown selection scheme `{s}`")))
    }
}

/// Picks the residual series used for a query at time `t`.
///
/// Every history point must precede `t`; otherwise the call fails with
/// [`Error::LookAhead`].
pub fn select_series(
    history: &[ResidualPoint],
    t: Timestamp,
    scheme: SelectionScheme,
) -> Result<Vec<ResidualPoint>> {
    if let Some(p) = history.iter().find(|p| p.timestamp >= t) {
        return Err(Error::LookAhead {
            history: p.timestamp,
            query: t,
        });
    }
    let observed = || {
        history
            .iter()
            .filter(|p| p.source == ResidualSource::Observed)
    };
    let mut out: Vec<ResidualPoint> = match scheme {
        SelectionScheme::Local => match observed().next_back() {
            Some(latest) => observed()
                .filter(|p| p.segment_id == latest.segment_id)
                .cloned()
                .collect(),
            None => Vec::new(),
        },
        SelectionScheme::Global => observed().cloned().collect(),
        SelectionScheme::Recursive => history.to_vec(),
    };
    out.sort_by_key(|p| p.timestamp);
    Ok(out)
}
