//! Residual weighting functions and their batch evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingScheme {
    Uniform,
    Linear,
    Exponential,
}

impl WeightingScheme {
    pub const ALL: [WeightingScheme; 3] = [
        WeightingScheme::Uniform,
        WeightingScheme::Linear,
        WeightingScheme::Exponential,
    ];

    /// Short name used in report column labels.
    pub fn short(self) -> &'static str {
        match self {
            WeightingScheme::Uniform => "uniform",
            WeightingScheme::Linear => "linear",
            WeightingScheme::Exponential => "exp",
        }
    }
}

impl FromStr for WeightingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(WeightingScheme::Uniform),
            "linear" => Ok(WeightingScheme::Linear),
            "exp" | "exponential" => Ok(WeightingScheme::Exponential),
            _ => Err(Error::InvalidConfig(format!("unknown weighting `{s}`"))),
        }
    }
}

impl fmt::Display for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Which end of the series the linear scheme favours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearDirection {
    /// w_τ ∝ τ
    RecentHeavy,
    /// w_τ ∝ t + 1 − τ
    OldestHeavy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingConfig {
    pub scheme: WeightingScheme,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_direction")]
    pub linear_direction: LinearDirection,
    #[serde(default = "default_normalize")]
    pub normalize: bool,
}

fn default_alpha() -> f64 {
    0.9
}

fn default_direction() -> LinearDirection {
    LinearDirection::RecentHeavy
}

fn default_normalize() -> bool {
    true
}

impl WeightingConfig {
    pub fn new(scheme: WeightingScheme) -> Self {
        WeightingConfig {
            scheme,
            alpha: default_alpha(),
            linear_direction: default_direction(),
            normalize: default_normalize(),
        }
    }

    pub fn uniform() -> Self {
        Self::new(WeightingScheme::Uniform)
    }

    pub fn linear() -> Self {
        Self::new(WeightingScheme::Linear)
    }

    pub fn exponential(alpha: f64) -> Self {
        WeightingConfig {
            alpha,
            ..Self::new(WeightingScheme::Exponential)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Weights w_1..w_t applied to a series of length `t`, oldest first.
pub fn weights(t: usize, w: &WeightingConfig) -> Vec<f64> {
    if t == 0 {
        return Vec::new();
    }
    let tf = t as f64;
    match w.scheme {
        WeightingScheme::Uniform => {
            let v = if w.normalize { 1.0 / tf } else { 1.0 };
            vec![v; t]
        }
        WeightingScheme::Linear => {
            let denom = tf * (tf + 1.0);
            (1..=t)
                .map(|tau| {
                    let k = match w.linear_direction {
                        LinearDirection::RecentHeavy => tau as f64,
                        LinearDirection::OldestHeavy => (t + 1 - tau) as f64,
                    };
                    2.0 * k / denom
                })
                .collect()
        }
        WeightingScheme::Exponential => {
            let raw: Vec<f64> = (1..=t)
                .map(|tau| (1.0 - w.alpha) * w.alpha.powi((t - tau) as i32))
                .collect();
            if w.normalize {
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / total).collect()
            } else {
                raw
            }
        }
    }
}

/// Batch correction factor Σ w_τ r_τ; zero for an empty series.
pub fn correction(series: &[f64], w: &WeightingConfig) -> f64 {
    weights(series.len(), w)
        .iter()
        .zip(series)
        .map(|(w, r)| w * r)
        .sum()
}
