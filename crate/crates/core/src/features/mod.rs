//! Feature vectors for the temperature and humidity models.
//!
//! Each (target, model kind, segment kind) triple selects a fixed,
//! ordered feature set; see [`feature_set`]. The conditional models add the
//! correction factor (`res_temp` / `res_rh`) and, for humidity, the
//! psychrometric proxy driven by the estimated container temperature, on
//! ocean rows only.

pub mod psychro;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::telemetry::{Leg, Measurement, SegmentKind};

/// Ratios whose denominator is closer to zero than this are degenerate.
pub const DEGENERATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Temperature,
    Humidity,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::Temperature, Target::Humidity];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::Temperature => "temperature",
            Target::Humidity => "humidity",
        }
    }

    /// Observed container value for this target.
    pub fn truth(self, m: &Measurement) -> f64 {
        match self {
            Target::Temperature => m.internal_temp,
            Target::Humidity => m.internal_rh,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub target: Target,
    pub model_kind: ModelKind,
    pub phi1: f64,
    pub phi2: f64,
}

impl FeatureConfig {
    pub const DEFAULT_PHI1: f64 = 1.0;
    pub const DEFAULT_PHI2: f64 = 80.0;

    pub fn new(target: Target, model_kind: ModelKind) -> Self {
        FeatureConfig {
            target,
            model_kind,
            phi1: Self::DEFAULT_PHI1,
            phi2: Self::DEFAULT_PHI2,
        }
    }

    pub fn with_phi(mut self, phi1: f64, phi2: f64) -> Self {
        self.phi1 = phi1;
        self.phi2 = phi2;
        self
    }

    pub fn names(&self, segment: SegmentKind) -> &'static [Feature] {
        feature_set(self.target, self.model_kind, segment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Temperature,
    SolarRadiation,
    SolarRadiationSq,
    SolarRadiationSqrt,
    WindspeedTemperature,
    WaterVp,
    RelHumidity,
    Windspeed,
    InitTemperature,
    InitRh,
    TempIndicator1,
    WindspeedRhPct,
    WindspeedIndicator1,
    TemperatureRh,
    RelDewpoint,
    PsychroRh,
    WindspeedIndicator2,
    ResTemp,
    ResRh,
    PsychoRh,
}

impl Feature {
    pub const ALL: [Feature; 20] = [
        Feature::Temperature,
        Feature::SolarRadiation,
        Feature::SolarRadiationSq,
        Feature::SolarRadiationSqrt,
        Feature::WindspeedTemperature,
        Feature::WaterVp,
        Feature::RelHumidity,
        Feature::Windspeed,
        Feature::InitTemperature,
        Feature::InitRh,
        Feature::TempIndicator1,
        Feature::WindspeedRhPct,
        Feature::WindspeedIndicator1,
        Feature::TemperatureRh,
        Feature::RelDewpoint,
        Feature::PsychroRh,
        Feature::WindspeedIndicator2,
        Feature::ResTemp,
        Feature::ResRh,
        Feature::PsychoRh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Temperature => "temperature",
            Feature::SolarRadiation => "solar_radiation",
            Feature::SolarRadiationSq => "solar_radiation_sq",
            Feature::SolarRadiationSqrt => "solar_radiation_sqrt",
            Feature::WindspeedTemperature => "windspeed_temperature",
            Feature::WaterVp => "water_vp",
            Feature::RelHumidity => "rel_humidity",
            Feature::Windspeed => "windspeed",
            Feature::InitTemperature => "init_temperature",
            Feature::InitRh => "init_rh",
            Feature::TempIndicator1 => "temp_indicator1",
            Feature::WindspeedRhPct => "windspeed_rh_pct",
            Feature::WindspeedIndicator1 => "windspeed_indicator1",
            Feature::TemperatureRh => "temperature_rh",
            Feature::RelDewpoint => "rel_dewpoint",
            Feature::PsychroRh => "psychro_rh",
            Feature::WindspeedIndicator2 => "windspeed_indicator2",
            Feature::ResTemp => "res_temp",
            Feature::ResRh => "res_rh",
            Feature::PsychoRh => "psycho_rh",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::MissingFeature(s.to_string()))
    }
}

use Feature as F;

const TEMPERATURE_SET: [Feature; 13] = [
    F::Temperature,
    F::SolarRadiation,
    F::SolarRadiationSq,
    F::SolarRadiationSqrt,
    F::WindspeedTemperature,
    F::WaterVp,
    F::RelHumidity,
    F::Windspeed,
    F::InitTemperature,
    F::InitRh,
    F::TempIndicator1,
    F::WindspeedRhPct,
    F::WindspeedIndicator1,
];

const TEMPERATURE_OCEAN_SET: [Feature; 14] = [
    F::Temperature,
    F::SolarRadiation,
    F::SolarRadiationSq,
    F::SolarRadiationSqrt,
    F::WindspeedTemperature,
    F::WaterVp,
    F::RelHumidity,
    F::Windspeed,
    F::InitTemperature,
    F::InitRh,
    F::TempIndicator1,
    F::WindspeedRhPct,
    F::WindspeedIndicator1,
    F::ResTemp,
];

const HUMIDITY_BASELINE_SET: [Feature; 8] = [
    F::Temperature,
    F::SolarRadiation,
    F::SolarRadiationSq,
    F::WindspeedTemperature,
    F::TemperatureRh,
    F::RelDewpoint,
    F::PsychroRh,
    F::WindspeedIndicator2,
];

const HUMIDITY_LAND_SET: [Feature; 7] = [
    F::Temperature,
    F::SolarRadiation,
    F::SolarRadiationSq,
    F::WindspeedTemperature,
    F::TemperatureRh,
    F::RelDewpoint,
    F::WindspeedIndicator2,
];

const HUMIDITY_OCEAN_SET: [Feature; 9] = [
    F::Temperature,
    F::SolarRadiation,
    F::SolarRadiationSq,
    F::WindspeedTemperature,
    F::TemperatureRh,
    F::RelDewpoint,
    F::WindspeedIndicator2,
    F::ResRh,
    F::PsychoRh,
];

/// Ordered feature names for a model. Baseline models ignore `segment`.
pub fn feature_set(target: Target, kind: ModelKind, segment: SegmentKind) -> &'static [Feature] {
    match (target, kind, segment) {
        (Target::Temperature, ModelKind::Baseline, _) => &TEMPERATURE_SET,
        (Target::Temperature, ModelKind::Conditional, SegmentKind::Land) => &TEMPERATURE_SET,
        (Target::Temperature, ModelKind::Conditional, SegmentKind::Ocean) => &TEMPERATURE_OCEAN_SET,
        (Target::Humidity, ModelKind::Baseline, _) => &HUMIDITY_BASELINE_SET,
        (Target::Humidity, ModelKind::Conditional, SegmentKind::Land) => &HUMIDITY_LAND_SET,
        (Target::Humidity, ModelKind::Conditional, SegmentKind::Ocean) => &HUMIDITY_OCEAN_SET,
    }
}

/// Extra inputs that do not come from the measurement itself.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AuxInputs {
    /// Container temperature estimated by the conditional temperature model.
    pub est_temp: Option<f64>,
    /// Correction factor from the residual history.
    pub correction: Option<f64>,
}

/// Named feature values in schema order. The intercept is implicit: models
/// always carry one, and [`FeatureVector::design_row`] prepends the `1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    names: &'static [Feature],
    values: Vec<f64>,
    /// Entries zeroed because a ratio denominator vanished.
    pub degenerate: u32,
}

impl FeatureVector {
    /// Builds a vector from explicit values; mostly useful in tests.
    pub fn from_parts(names: &'static [Feature], values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} names for {} values",
                names.len(),
                values.len()
            )));
        }
        Ok(FeatureVector {
            names,
            values,
            degenerate: 0,
        })
    }

    pub fn names(&self) -> &'static [Feature] {
        self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, feature: Feature) -> Option<f64> {
        self.names
            .iter()
            .position(|&f| f == feature)
            .map(|i| self.values[i])
    }

    pub fn get_by_name(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|f| f.as_str() == name)
            .map(|i| self.values[i])
    }

    pub fn design_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.values.len() + 1);
        row.push(1.0);
        row.extend_from_slice(&self.values);
        row
    }
}

/// Computes the feature vector of `m` for the model described by `cfg`.
///
/// `segment` picks the land or ocean variant of a conditional model. The
/// ocean variants need `aux.correction`, and conditional humidity on the
/// ocean additionally needs `aux.est_temp`.
pub fn build_features(
    m: &Measurement,
    leg: &Leg,
    cfg: &FeatureConfig,
    segment: SegmentKind,
    aux: AuxInputs,
) -> Result<FeatureVector> {
    let names = cfg.names(segment);
    let t = m.ext_temp;
    let rh = m.ext_rh;
    let ws = m.windspeed;
    let sr = m.solar_radiation;
    let mut degenerate = 0u32;

    let dew_ratio_ok = leg.init_dewpoint.abs() > DEGENERATE_EPS;
    let below_dew = dew_ratio_ok && t / leg.init_dewpoint <= cfg.phi1;

    let mut values = Vec::with_capacity(names.len());
    for &feature in names {
        let v = match feature {
            F::Temperature => t,
            F::SolarRadiation => sr,
            F::SolarRadiationSq => sr * sr,
            F::SolarRadiationSqrt => sr.sqrt(),
            F::WindspeedTemperature => ws * t,
            F::WaterVp => psychro::vapor_pressure(t, rh)?,
            F::RelHumidity => rh,
            F::Windspeed => ws,
            F::InitTemperature => leg.init_temp,
            F::InitRh => leg.init_rh,
            F::TempIndicator1 | F::WindspeedIndicator1 => {
                let base = if feature == F::TempIndicator1 { t } else { ws };
                if !dew_ratio_ok {
                    degenerate += 1;
                    0.0
                } else if below_dew {
                    base
                } else {
                    0.0
                }
            }
            F::WindspeedRhPct => {
                if rh.abs() <= DEGENERATE_EPS {
                    degenerate += 1;
                    0.0
                } else {
                    ws / rh - 1.0
                }
            }
            F::TemperatureRh => t * rh,
            F::RelDewpoint => {
                if !dew_ratio_ok {
                    degenerate += 1;
                    0.0
                } else {
                    psychro::dewpoint_floored(t, rh)? / leg.init_dewpoint - 1.0
                }
            }
            F::PsychroRh => psychro::psychro_rh(t, leg.init_temp, leg.init_rh)?,
            F::WindspeedIndicator2 => {
                let p = psychro::psychro_rh(t, leg.init_temp, leg.init_rh)?;
                if p <= cfg.phi2 {
                    ws
                } else {
                    0.0
                }
            }
            F::ResTemp | F::ResRh => aux
                .correction
                .ok_or_else(|| Error::MissingFeature(format!("{feature} (correction)")))?,
            F::PsychoRh => {
                let est = aux
                    .est_temp
                    .ok_or_else(|| Error::MissingFeature(format!("{feature} (est_temp)")))?;
                psychro::psychro_rh(est, leg.init_temp, leg.init_rh)?
            }
        };
        if !v.is_finite() {
            return Err(Error::Domain {
                quantity: feature.as_str(),
                value: v,
            });
        }
        values.push(v);
    }
    Ok(FeatureVector {
        names,
        values,
        degenerate,
    })
}

#[derive(Debug, Serialize)]
struct TargetSchema {
    baseline: Vec<&'static str>,
    conditional_land: Vec<&'static str>,
    conditional_ocean: Vec<&'static str>,
}

/// JSON listing of every feature set, for audit.
pub fn schema_json(phi1: f64, phi2: f64) -> serde_json::Value {
    let names = |t, k, s| {
        feature_set(t, k, s)
            .iter()
            .map(|f| f.as_str())
            .collect::<Vec<_>>()
    };
    let mut targets = serde_json::Map::new();
    for t in Target::ALL {
        let schema = TargetSchema {
            baseline: names(t, ModelKind::Baseline, SegmentKind::Land),
            conditional_land: names(t, ModelKind::Conditional, SegmentKind::Land),
            conditional_ocean: names(t, ModelKind::Conditional, SegmentKind::Ocean),
        };
        targets.insert(
            t.as_str().to_string(),
            serde_json::to_value(schema).expect("schema serializes"),
        );
    }
    serde_json::json!({
        "intercept": true,
        "phi1": phi1,
        "phi2": phi2,
        "targets": targets,
    })
}
