//! O(1) streaming accumulators for the correction factor.

use serde::{Deserialize, Serialize};

use super::selection::{ResidualPoint, ResidualSource, SelectionScheme};
use super::weighting::{LinearDirection, WeightingConfig, WeightingScheme};
use crate::error::{Error, Result};
use crate::telemetry::Timestamp;

/// Running sums that answer every weighting scheme without storing the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    alpha: f64,
    n: u64,
    sum: f64,
    /// Σ τ·r_τ
    index_sum: f64,
    /// Σ (1 − α) α^{t−τ} r_τ
    ema: f64,
    /// Σ (1 − α) α^{t−τ} = 1 − α^t
    mass: f64,
}

impl Accumulator {
    pub fn new(alpha: f64) -> Self {
        Accumulator {
            alpha,
            n: 0,
            sum: 0.0,
            index_sum: 0.0,
            ema: 0.0,
            mass: 0.0,
        }
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, r: f64) {
        self.n += 1;
        self.sum += r;
        self.index_sum += self.n as f64 * r;
        self.ema = self.alpha * self.ema + (1.0 - self.alpha) * r;
        self.mass = self.alpha * self.mass + (1.0 - self.alpha);
    }

    pub fn value(&self, w: &WeightingConfig) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let t = self.n as f64;
        match w.scheme {
            WeightingScheme::Uniform => {
                if w.normalize {
                    self.sum / t
                } else {
                    self.sum
                }
            }
            WeightingScheme::Linear => {
                let weighted = match w.linear_direction {
                    LinearDirection::RecentHeavy => self.index_sum,
                    LinearDirection::OldestHeavy => (t + 1.0) * self.sum - self.index_sum,
                };
                2.0 * weighted / (t * (t + 1.0))
            }
            WeightingScheme::Exponential => {
                debug_assert_eq!(w.alpha, self.alpha, "accumulator built for another alpha");
                if w.normalize {
                    self.ema / self.mass
                } else {
                    self.ema
                }
            }
        }
    }

    pub fn reset(&mut self) {
        *self = Accumulator::new(self.alpha);
    }
}

/// Per-shipment, per-target correction state covering all selection schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionState {
    weighting: WeightingConfig,
    global: Accumulator,
    local: Accumulator,
    recursive: Accumulator,
    local_segment: Option<String>,
    last: Option<Timestamp>,
}

impl CorrectionState {
    pub fn new(weighting: WeightingConfig) -> Self {
        let a = Accumulator::new(weighting.alpha);
        CorrectionState {
            weighting,
            global: a,
            local: a,
            recursive: a,
            local_segment: None,
            last: None,
        }
    }

    pub fn weighting(&self) -> &WeightingConfig {
        &self.weighting
    }

    pub fn last_timestamp(&self) -> Option<Timestamp> {
        self.last
    }

    /// Appends one point. Observed residuals feed every scheme; a new land
    /// segment restarts the local accumulator. Fed-back corrections only
    /// feed the recursive scheme.
    pub fn update(&mut self, r: &ResidualPoint) -> Result<()> {
        if let Some(last) = self.last {
            if r.timestamp < last {
                return Err(Error::OutOfOrder {
                    last,
                    got: r.timestamp,
                });
            }
        }
        self.last = Some(r.timestamp);
        match r.source {
            ResidualSource::Observed => {
                if self.local_segment.as_deref() != Some(r.segment_id.as_str()) {
                    self.local.reset();
                    self.local_segment = Some(r.segment_id.clone());
                }
                self.global.push(r.value);
                self.local.push(r.value);
                self.recursive.push(r.value);
            }
            ResidualSource::Recursive => self.recursive.push(r.value),
        }
        Ok(())
    }

    pub fn correction(&self, scheme: SelectionScheme) -> f64 {
        let acc = match scheme {
            SelectionScheme::Local => &self.local,
            SelectionScheme::Global => &self.global,
            SelectionScheme::Recursive => &self.recursive,
        };
        acc.value(&self.weighting)
    }

    /// Correction for a query at time `t`, refusing history that is not
    /// strictly earlier.
    pub fn correction_at(&self, scheme: SelectionScheme, t: Timestamp) -> Result<f64> {
        if let Some(last) = self.last {
            if last >= t {
                return Err(Error::LookAhead {
                    history: last,
                    query: t,
                });
            }
        }
        Ok(self.correction(scheme))
    }
}
