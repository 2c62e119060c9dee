//! Deterministic synthetic shipments with known ground truth.
//!
//! The world is 18 longitude bands of 20°, alternating land and ocean.
//! Each shipment alternates land and ocean legs in neighbouring bands while
//! drifting in latitude. Internal values are a fixed linear map of the
//! baseline features plus a per-shipment bias and i.i.d. noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_features, feature_set, AuxInputs, FeatureConfig, ModelKind, Target};
use crate::geotag::{to_geojson, Geometry, Label, LatLon, MapItem};
use crate::telemetry::{
    measurement_record, Leg, Measurement, SegmentKind, Shipment, CANONICAL_COLUMNS,
};

pub const BAND_WIDTH_DEG: f64 = 20.0;
pub const BAND_COUNT: usize = 18;
const WORLD_LAT: f64 = 60.0;
const NODE_GAP_HOURS: i64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_shipments: usize,
    /// Alternating land/ocean legs, starting on land.
    pub segments_per_shipment: usize,
    pub points_per_segment: usize,
    pub cadence_minutes: i64,
    pub start: NaiveDate,
    /// Window in which every shipment starts and ends.
    pub span_days: i64,
    pub bias_std_temp: f64,
    pub bias_std_rh: f64,
    pub noise_std_temp: f64,
    pub noise_std_rh: f64,
    pub diurnal_amplitude: f64,
    /// Weather noise on external temperature, °C.
    pub weather_noise_std: f64,
    /// Degrees of latitude per hour.
    pub lat_drift: f64,
    /// Adds a per-shipment linear bias drift.
    pub drift_bias: bool,
    /// Std of the drift rate, per hour.
    pub drift_std_temp: f64,
    pub drift_std_rh: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_shipments: 200,
            segments_per_shipment: 4,
            points_per_segment: 60,
            cadence_minutes: 60,
            start: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            span_days: 80,
            bias_std_temp: 2.0,
            bias_std_rh: 5.0,
            noise_std_temp: 1.0,
            noise_std_rh: 2.0,
            diurnal_amplitude: 6.0,
            weather_noise_std: 1.0,
            lat_drift: 0.05,
            drift_bias: false,
            drift_std_temp: 0.01,
            drift_std_rh: 0.02,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let stds = [
            ("bias_std_temp", self.bias_std_temp),
            ("bias_std_rh", self.bias_std_rh),
            ("noise_std_temp", self.noise_std_temp),
            ("noise_std_rh", self.noise_std_rh),
            ("weather_noise_std", self.weather_noise_std),
            ("drift_std_temp", self.drift_std_temp),
            ("drift_std_rh", self.drift_std_rh),
            ("diurnal_amplitude", self.diurnal_amplitude),
            ("lat_drift", self.lat_drift),
        ];
        for (name, v) in stds {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.n_shipments == 0 || self.segments_per_shipment == 0 || self.points_per_segment == 0
        {
            return Err(Error::InvalidConfig(
                "n_shipments, segments_per_shipment and points_per_segment must be positive".into(),
            ));
        }
        if self.cadence_minutes <= 0 {
            return Err(Error::InvalidConfig(
                "cadence_minutes must be positive".into(),
            ));
        }
        if self.duration() >= Duration::days(self.span_days) {
            return Err(Error::InvalidConfig(format!(
                "span_days {} is shorter than one shipment",
                self.span_days
            )));
        }
        let drift = self.lat_drift * self.duration().num_minutes() as f64 / 60.0;
        if drift > 15.0 {
            return Err(Error::InvalidConfig(format!(
                "latitude drift of {drift:.1}° leaves the synthetic world"
            )));
        }
        Ok(())
    }

    fn segment_length(&self) -> Duration {
        Duration::minutes(self.cadence_minutes * self.points_per_segment as i64)
    }

    /// Time from the first to past the last measurement of a shipment.
    pub fn duration(&self) -> Duration {
        let n = self.segments_per_shipment as i32;
        self.segment_length() * n + Duration::hours(NODE_GAP_HOURS) * (n - 1)
    }
}

/// Generating coefficients of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratingModel {
    pub intercept: f64,
    /// Coefficients in baseline feature order.
    pub coefficients: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegTruth {
    pub leg_id: String,
    pub kind: SegmentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShipmentTruth {
    pub bias_temp: f64,
    pub bias_rh: f64,
    /// Bias change per hour since the shipment start.
    pub drift_temp: f64,
    pub drift_rh: f64,
    pub legs: Vec<LegTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub temperature: GeneratingModel,
    pub humidity: GeneratingModel,
    pub shipments: BTreeMap<String, ShipmentTruth>,
    /// Humidity truths clamped into [0, 100].
    pub rh_clamped: usize,
}

impl GroundTruth {
    pub fn model(&self, target: Target) -> &GeneratingModel {
        match target {
            Target::Temperature => &self.temperature,
            Target::Humidity => &self.humidity,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Intended land/ocean kind of every leg, keyed by (shipment, leg).
    pub fn leg_kinds(&self) -> BTreeMap<(String, String), SegmentKind> {
        self.shipments
            .iter()
            .flat_map(|(sid, s)| {
                s.legs
                    .iter()
                    .map(move |l| ((sid.clone(), l.leg_id.clone()), l.kind))
            })
            .collect()
    }
}

/// The ideal correction for a synthetic shipment: its recorded bias.
pub fn oracle_correction(truth: &GroundTruth, shipment_id: &str, target: Target) -> Result<f64> {
    let s = truth
        .shipments
        .get(shipment_id)
        .ok_or_else(|| Error::NotSynthetic(shipment_id.to_string()))?;
    Ok(match target {
        Target::Temperature => s.bias_temp,
        Target::Humidity => s.bias_rh,
    })
}

/// Prediction of the generating model without bias or noise.
pub fn generating_prediction(
    model: &GeneratingModel,
    m: &Measurement,
    leg: &Leg,
    target: Target,
) -> Result<f64> {
    let cfg = FeatureConfig::new(target, ModelKind::Baseline);
    let x = build_features(m, leg, &cfg, SegmentKind::Land, AuxInputs::default())?;
    let mut y = model.intercept;
    for (f, v) in x.names().iter().zip(x.values()) {
        y += model.coefficients.get(f.as_str()).copied().unwrap_or(0.0) * v;
    }
    Ok(y)
}

fn generating_models() -> (GeneratingModel, GeneratingModel) {
    let temp = [
        0.8, 0.004, -1e-6, 0.02, -0.01, 0.05, -0.01, -0.05, 0.1, 0.005, 0.05, 0.2, 0.02,
    ];
    let rh = [0.5, -0.01, 0.0, 0.01, 0.005, 2.0, 0.0, 0.3];
    let model = |target, coefs: &[f64], intercept| {
        let names = feature_set(target, ModelKind::Baseline, SegmentKind::Land);
        assert_eq!(names.len(), coefs.len());
        GeneratingModel {
            intercept,
            coefficients: names
                .iter()
                .zip(coefs)
                .map(|(f, c)| (f.as_str().to_string(), *c))
                .collect(),
        }
    };
    (
        model(Target::Temperature, &temp, 2.0),
        model(Target::Humidity, &rh, 30.0),
    )
}

/// Band index of a longitude.
pub fn band_of(lon: f64) -> usize {
    (((lon + 180.0) / BAND_WIDTH_DEG).floor() as usize).min(BAND_COUNT - 1)
}

fn band_center(band: usize) -> f64 {
    -180.0 + BAND_WIDTH_DEG * (band as f64 + 0.5)
}

/// Map of the synthetic world: even bands are land (with a north-south
/// road on the band centre), odd bands ocean.
pub fn synthetic_world() -> Vec<MapItem> {
    let land_labels = [Label::Residential, Label::Park, Label::Industrial];
    let mut items = Vec::new();
    for band in 0..BAND_COUNT {
        let lo = -180.0 + BAND_WIDTH_DEG * band as f64;
        let hi = lo + BAND_WIDTH_DEG;
        let ring = vec![
            LatLon::new(-WORLD_LAT, lo),
            LatLon::new(-WORLD_LAT, hi),
            LatLon::new(WORLD_LAT, hi),
            LatLon::new(WORLD_LAT, lo),
            LatLon::new(-WORLD_LAT, lo),
        ];
        if band % 2 == 0 {
            items.push(MapItem::polygon(ring, land_labels[(band / 2) % 3]));
            let c = band_center(band);
            items.push(MapItem::new(
                Geometry::LineString(vec![LatLon::new(-WORLD_LAT, c), LatLon::new(WORLD_LAT, c)]),
                Label::Road,
            ));
        } else {
            items.push(MapItem::polygon(ring, Label::Ocean));
        }
    }
    items
}

pub fn synthetic_world_geojson() -> String {
    to_geojson(&synthetic_world())
}

/// Generated dataset: shipments (untagged), node rows, and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub shipments: Vec<Shipment>,
    /// Dwell rows between legs, written with row type `node`.
    pub nodes: Vec<Measurement>,
    pub truth: GroundTruth,
}

impl SynthOutput {
    /// Canonical CSV with leg and node rows interleaved in time order.
    pub fn to_csv(&self) -> Result<String> {
        let mut rows: Vec<(&str, chrono::DateTime<Utc>, &str, &Measurement)> = Vec::new();
        for m in self.shipments.iter().flat_map(Shipment::measurements) {
            rows.push((&m.shipment_id, m.timestamp, "leg", m));
        }
        for m in &self.nodes {
            rows.push((&m.shipment_id, m.timestamp, "node", m));
        }
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CANONICAL_COLUMNS)?;
        for (_, _, kind, m) in rows {
            w.write_record(measurement_record(m, kind))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("utf-8 csv"))
    }

    /// Writes `telemetry.csv`, `ground_truth.json` and
    /// `synthetic_world.geojson` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("telemetry.csv", self.to_csv()?)?;
        put(
            "ground_truth.json",
            serde_json::to_string_pretty(&self.truth)?,
        )?;
        put("synthetic_world.geojson", synthetic_world_geojson())
    }
}

struct Weather {
    ext_temp: f64,
    ext_rh: f64,
    solar: f64,
    wind: f64,
}

fn weather(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    t: chrono::DateTime<Utc>,
    p: LatLon,
    kind: SegmentKind,
) -> Weather {
    let std = |s: f64| Normal::new(0.0, s).expect("validated std");
    let local_hour = (t.timestamp() as f64 / 3600.0 + p.lon / 15.0).rem_euclid(24.0);
    let base = 30.0 - 0.35 * p.lat.abs();
    let ext_temp = base
        + cfg.diurnal_amplitude * (2.0 * PI * (local_hour - 9.0) / 24.0).sin()
        + std(cfg.weather_noise_std).sample(rng);
    let ext_rh = (75.0 - 1.2 * (ext_temp - base) + std(5.0).sample(rng)).clamp(5.0, 100.0);
    let day = (PI * (local_hour - 6.0) / 12.0).sin();
    let cloud: f64 = rng.random_range(0.6..1.0);
    let solar = if day > 0.0 {
        900.0 * day * p.lat.to_radians().cos() * cloud
    } else {
        0.0
    };
    let (w_mean, w_std) = match kind {
        SegmentKind::Land => (3.5, 1.5),
        SegmentKind::Ocean => (7.0, 2.5),
    };
    let wind = (w_mean + std(w_std).sample(rng)).abs();
    Weather {
        ext_temp,
        ext_rh,
        solar,
        wind,
    }
}

/// Generates a dataset; the same config always yields the same output.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (temp_model, rh_model) = generating_models();
    let normal = |s: f64| Normal::new(0.0, s).expect("validated std");
    let start = Utc.from_utc_datetime(&cfg.start.and_hms_opt(0, 0, 0).expect("midnight"));
    let latest_start = (Duration::days(cfg.span_days) - cfg.duration()).num_minutes();

    let mut shipments = Vec::with_capacity(cfg.n_shipments);
    let mut nodes = Vec::new();
    let mut truths = BTreeMap::new();
    let mut rh_clamped = 0usize;

    for s in 0..cfg.n_shipments {
        let shipment_id = format!("S{:04}", s + 1);
        let t0 = start + Duration::minutes(rng.random_range(0..=latest_start));
        let first_band = 2 * rng.random_range(0..BAND_COUNT / 2);
        let start_lat: f64 = rng.random_range(-40.0..40.0);
        let lat_dir = if start_lat > 0.0 { -1.0 } else { 1.0 };
        let bias_temp = normal(cfg.bias_std_temp).sample(&mut rng);
        let bias_rh = normal(cfg.bias_std_rh).sample(&mut rng);
        let (drift_temp, drift_rh) = if cfg.drift_bias {
            (
                normal(cfg.drift_std_temp).sample(&mut rng),
                normal(cfg.drift_std_rh).sample(&mut rng),
            )
        } else {
            (0.0, 0.0)
        };

        let mut legs = Vec::with_capacity(cfg.segments_per_shipment);
        let mut leg_truths = Vec::with_capacity(cfg.segments_per_shipment);
        let mut t = t0;
        for k in 0..cfg.segments_per_shipment {
            let kind = if k % 2 == 0 {
                SegmentKind::Land
            } else {
                SegmentKind::Ocean
            };
            let band = (first_band + k) % BAND_COUNT;
            let center = band_center(band);
            let leg_id = format!("{shipment_id}-L{}", k + 1);
            if k > 0 {
                for n in 1..NODE_GAP_HOURS {
                    let nt = t - Duration::minutes(cfg.cadence_minutes) + Duration::hours(n);
                    let hours = (nt - t0).num_minutes() as f64 / 60.0;
                    let lat = start_lat + lat_dir * cfg.lat_drift * hours;
                    let w = weather(&mut rng, cfg, nt, LatLon::new(lat, center), kind);
                    nodes.push(Measurement {
                        timestamp: nt,
                        shipment_id: shipment_id.clone(),
                        leg_id: format!("{shipment_id}-N{k}"),
                        lat,
                        lon: center,
                        internal_temp: w.ext_temp,
                        internal_rh: w.ext_rh,
                        ext_temp: w.ext_temp,
                        ext_rh: w.ext_rh,
                        solar_radiation: w.solar,
                        windspeed: w.wind,
                        environment: None,
                    });
                }
                t += Duration::hours(NODE_GAP_HOURS) - Duration::minutes(cfg.cadence_minutes);
            }
            let mut ms = Vec::with_capacity(cfg.points_per_segment);
            for _ in 0..cfg.points_per_segment {
                let hours = (t - t0).num_minutes() as f64 / 60.0;
                let lat = start_lat + lat_dir * cfg.lat_drift * hours;
                let lon = center + rng.random_range(-0.005..0.005);
                let w = weather(&mut rng, cfg, t, LatLon::new(lat, lon), kind);
                ms.push(Measurement {
                    timestamp: t,
                    shipment_id: shipment_id.clone(),
                    leg_id: leg_id.clone(),
                    lat,
                    lon,
                    internal_temp: 0.0,
                    internal_rh: 0.0,
                    ext_temp: w.ext_temp,
                    ext_rh: w.ext_rh,
                    solar_radiation: w.solar,
                    windspeed: w.wind,
                    environment: None,
                });
                t += Duration::minutes(cfg.cadence_minutes);
            }
            let mut leg = Leg::new(ms)?;
            let frozen = leg.clone();
            for (m, orig) in leg.measurements.iter_mut().zip(&frozen.measurements) {
                let hours = (m.timestamp - t0).num_minutes() as f64 / 60.0;
                let yt = generating_prediction(&temp_model, orig, &frozen, Target::Temperature)?;
                let yh = generating_prediction(&rh_model, orig, &frozen, Target::Humidity)?;
                m.internal_temp = yt
                    + bias_temp
                    + drift_temp * hours
                    + normal(cfg.noise_std_temp).sample(&mut rng);
                let rh =
                    yh + bias_rh + drift_rh * hours + normal(cfg.noise_std_rh).sample(&mut rng);
                if !(0.0..=100.0).contains(&rh) {
                    rh_clamped += 1;
                }
                m.internal_rh = rh.clamp(0.0, 100.0);
            }
            legs.push(leg);
            leg_truths.push(LegTruth { leg_id, kind });
        }
        shipments.push(Shipment::new(shipment_id.clone(), legs));
        truths.insert(
            shipment_id,
            ShipmentTruth {
                bias_temp,
                bias_rh,
                drift_temp,
                drift_rh,
                legs: leg_truths,
            },
        );
    }
    if rh_clamped > 0 {
        log::warn!("{rh_clamped} humidity truths clamped into [0, 100]");
    }
    Ok(SynthOutput {
        shipments,
        nodes,
        truth: GroundTruth {
            config: cfg.clone(),
            temperature: temp_model,
            humidity: rh_model,
            shipments: truths,
            rh_clamped,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::fit_ols;
    use crate::telemetry::{ingest_csv, ColumnMapping};

    fn small() -> SynthConfig {
        SynthConfig {
            n_shipments: 30,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn exact_recovery_without_bias_or_noise() {
        let cfg = SynthConfig {
            bias_std_temp: 0.0,
            bias_std_rh: 0.0,
            noise_std_temp: 0.0,
            noise_std_rh: 0.0,
            ..small()
        };
        let out = generate(&cfg).unwrap();
        assert_eq!(out.truth.rh_clamped, 0);
        for target in Target::ALL {
            let fc = FeatureConfig::new(target, ModelKind::Baseline);
            let rows: Vec<_> = out
                .shipments
                .iter()
                .flat_map(|s| s.legs.iter())
                .flat_map(|l| l.measurements.iter().map(move |m| (l, m)))
                .map(|(l, m)| {
                    let x =
                        build_features(m, l, &fc, SegmentKind::Land, AuxInputs::default()).unwrap();
                    (x, target.truth(m))
                })
                .collect();
            let fit = fit_ols(&rows, &fc).unwrap();
            let gen = out.truth.model(target);
            assert!(
                (fit.intercept - gen.intercept).abs() < 1e-6,
                "{target} intercept {}",
                fit.intercept
            );
            for (name, c) in fit.feature_names.iter().zip(&fit.coefficients) {
                let want = gen.coefficients[name];
                assert!((c - want).abs() < 1e-6, "{target} {name}: {c} vs {want}");
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap().to_csv().unwrap();
        let b = generate(&small()).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 8, ..small() })
            .unwrap()
            .to_csv()
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_ingests_back_to_same_shipments() {
        let out = generate(&small()).unwrap();
        let report =
            ingest_csv(out.to_csv().unwrap().as_bytes(), &ColumnMapping::default()).unwrap();
        assert!(report.rejects.is_empty(), "{:?}", report.rejects.first());
        assert_eq!(report.nodes_dropped, out.nodes.len());
        assert_eq!(report.shipments, out.shipments);
    }

    #[test]
    fn land_residual_mean_tracks_bias() {
        let cfg = small();
        let out = generate(&cfg).unwrap();
        for s in &out.shipments {
            let mut total = 0.0;
            let mut n = 0usize;
            for leg in s.legs.iter().step_by(2) {
                for m in &leg.measurements {
                    let y =
                        generating_prediction(&out.truth.temperature, m, leg, Target::Temperature)
                            .unwrap();
                    total += m.internal_temp - y;
                    n += 1;
                }
            }
            let b = oracle_correction(&out.truth, &s.shipment_id, Target::Temperature).unwrap();
            let bound = 3.0 * cfg.noise_std_temp / (n as f64).sqrt();
            assert!((total / n as f64 - b).abs() <= bound, "{}", s.shipment_id);
        }
    }

    #[test]
    fn oracle_rejects_unknown_shipment() {
        let out = generate(&SynthConfig {
            n_shipments: 1,
            ..small()
        })
        .unwrap();
        assert!(matches!(
            oracle_correction(&out.truth, "nope", Target::Temperature),
            Err(Error::NotSynthetic(_))
        ));
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SynthConfig {
            noise_std_temp: -1.0,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            span_days: 5,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn world_alternates_land_and_ocean() {
        let world = synthetic_world();
        assert_eq!(world.len(), 27);
        assert_eq!(band_of(-170.0), 0);
        assert_eq!(band_of(180.0), 17);
        let ocean = world.iter().filter(|i| i.label == Label::Ocean).count();
        assert_eq!(ocean, 9);
    }
}
