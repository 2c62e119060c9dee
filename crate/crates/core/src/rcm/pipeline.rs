//! Three-stage training and per-shipment streaming prediction.
//!
//! Stage 1 fits a land model `f` per target on land rows. Stage 2 walks
//! every training shipment in time order, turning land residuals into a
//! correction factor for each ocean row. Stage 3 fits the ocean model `h`
//! with that factor as a feature. Inference runs the same walk.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::selection::{ResidualPoint, ResidualSource, SelectionScheme};
use super::state::CorrectionState;
use super::weighting::{LinearDirection, WeightingConfig, WeightingScheme};
use crate::error::{Error, Result};
use crate::features::{build_features, AuxInputs, FeatureConfig, FeatureVector, ModelKind, Target};
use crate::regress::{fit_ols, LinearModel};
use crate::telemetry::{
    Leg, Measurement, Segment, SegmentKind, Shipment, TimelinePoint, Timestamp,
};

/// How corrections for training ocean rows are produced under every scheme.
pub const RECURSIVE_TRAINING: &str = "sequential_rollout";

/// Everything that must agree between training and prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcmConfig {
    pub scheme: SelectionScheme,
    pub weighting: WeightingConfig,
    pub phi1: f64,
    pub phi2: f64,
    pub recursive_training: String,
}

impl RcmConfig {
    pub fn new(scheme: SelectionScheme, weighting: WeightingConfig) -> Self {
        RcmConfig {
            scheme,
            weighting,
            phi1: FeatureConfig::DEFAULT_PHI1,
            phi2: FeatureConfig::DEFAULT_PHI2,
            recursive_training: RECURSIVE_TRAINING.to_string(),
        }
    }

    pub fn with_phi(mut self, phi1: f64, phi2: f64) -> Self {
        self.phi1 = phi1;
        self.phi2 = phi2;
        self
    }

    /// Report label, e.g. `exp/global`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.weighting.scheme.short(), self.scheme)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// The nine weighting × selection variants in report order, sharing
    /// `base`'s alpha, direction and normalization.
    pub fn variants(base: &WeightingConfig, phi1: f64, phi2: f64) -> Vec<RcmConfig> {
        let mut out = Vec::with_capacity(9);
        for scheme in WeightingScheme::ALL {
            for selection in SelectionScheme::ALL {
                let w = WeightingConfig { scheme, ..*base };
                out.push(RcmConfig::new(selection, w).with_phi(phi1, phi2));
            }
        }
        out
    }

    pub fn feature_config(&self, target: Target) -> FeatureConfig {
        FeatureConfig::new(target, ModelKind::Conditional).with_phi(self.phi1, self.phi2)
    }

    pub fn validate(&self) -> Result<()> {
        self.weighting.validate()?;
        if self.recursive_training != RECURSIVE_TRAINING {
            return Err(Error::InvalidConfig(format!(
                "unsupported recursive_training `{}`",
                self.recursive_training
            )));
        }
        Ok(())
    }
}

/// Counts of correction queries and of queries that saw non-earlier history.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookAheadAudit {
    pub checks: u64,
    pub violations: u64,
}

impl LookAheadAudit {
    pub fn merge(&mut self, other: LookAheadAudit) {
        self.checks += other.checks;
        self.violations += other.violations;
    }
}

/// Residuals `y − f(x)` over a land segment, in segment order.
pub fn compute_residuals(
    model: &LinearModel,
    shipment: &Shipment,
    segment: &Segment,
    cfg: &FeatureConfig,
) -> Result<Vec<ResidualPoint>> {
    if segment.kind != SegmentKind::Land {
        return Err(Error::OceanSegment(segment.segment_id.clone()));
    }
    if model.target != cfg.target {
        return Err(Error::SchemaMismatch(format!(
            "{} model used with {} features",
            model.target, cfg.target
        )));
    }
    segment
        .measurements
        .iter()
        .map(|m| {
            let leg = leg_of(shipment, m)?;
            let x = build_features(m, leg, cfg, SegmentKind::Land, AuxInputs::default())?;
            Ok(ResidualPoint {
                timestamp: m.timestamp,
                segment_id: segment.segment_id.clone(),
                value: cfg.target.truth(m) - model.predict(&x)?,
                source: ResidualSource::Observed,
            })
        })
        .collect()
}

fn leg_of<'a>(shipment: &'a Shipment, m: &Measurement) -> Result<&'a Leg> {
    shipment
        .legs
        .iter()
        .find(|l| l.leg_id == m.leg_id)
        .ok_or_else(|| Error::SchemaMismatch(format!("leg {} not in shipment", m.leg_id)))
}

/// Residual history of one target within one shipment.
#[derive(Debug, Clone)]
pub struct CorrectionStream<'a> {
    f_land: &'a LinearModel,
    cfg: FeatureConfig,
    scheme: SelectionScheme,
    state: CorrectionState,
    audit: LookAheadAudit,
}

impl<'a> CorrectionStream<'a> {
    pub fn new(f_land: &'a LinearModel, rcm: &RcmConfig) -> Self {
        CorrectionStream {
            f_land,
            cfg: rcm.feature_config(f_land.target),
            scheme: rcm.scheme,
            state: CorrectionState::new(rcm.weighting),
            audit: LookAheadAudit::default(),
        }
    }

    /// Feeds a land measurement with its observed internal value.
    pub fn observe(&mut self, leg: &Leg, m: &Measurement, segment_id: &str) -> Result<f64> {
        let x = build_features(m, leg, &self.cfg, SegmentKind::Land, AuxInputs::default())?;
        let r = self.cfg.target.truth(m) - self.f_land.predict(&x)?;
        self.state.update(&ResidualPoint {
            timestamp: m.timestamp,
            segment_id: segment_id.to_string(),
            value: r,
            source: ResidualSource::Observed,
        })?;
        Ok(r)
    }

    /// Correction factor for a query at `t`, audited for look-ahead.
    pub fn correction_at(&mut self, t: Timestamp) -> Result<f64> {
        self.audit.checks += 1;
        let c = self.state.correction_at(self.scheme, t);
        if c.is_err() {
            self.audit.violations += 1;
        }
        c
    }

    /// Records the correction emitted at `t` as a recursive pseudo-point.
    pub fn emit(&mut self, t: Timestamp, segment_id: &str, c: f64) -> Result<()> {
        self.state.update(&ResidualPoint {
            timestamp: t,
            segment_id: segment_id.to_string(),
            value: c,
            source: ResidualSource::Recursive,
        })
    }

    pub fn audit(&self) -> LookAheadAudit {
        self.audit
    }
}

/// Land and ocean models for one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModels {
    pub f_land: LinearModel,
    pub h_ocean: LinearModel,
}

/// One prediction for an ocean measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OceanPrediction {
    pub timestamp: Timestamp,
    pub leg_id: String,
    pub temperature: f64,
    pub humidity: f64,
    pub c_temp: f64,
    pub c_rh: f64,
}

/// A trained pipeline: both targets plus the configuration they assume.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveModels {
    pub config: RcmConfig,
    pub temperature: TargetModels,
    pub humidity: TargetModels,
}

/// Prediction-side walk over one shipment.
#[derive(Debug, Clone)]
pub struct ShipmentPredictor<'a> {
    models: &'a AdaptiveModels,
    temp: CorrectionStream<'a>,
    rh: CorrectionStream<'a>,
}

impl<'a> ShipmentPredictor<'a> {
    pub fn new(models: &'a AdaptiveModels) -> Self {
        ShipmentPredictor {
            models,
            temp: CorrectionStream::new(&models.temperature.f_land, &models.config),
            rh: CorrectionStream::new(&models.humidity.f_land, &models.config),
        }
    }

    pub fn observe(&mut self, leg: &Leg, m: &Measurement, segment_id: &str) -> Result<()> {
        self.temp.observe(leg, m, segment_id)?;
        self.rh.observe(leg, m, segment_id)?;
        Ok(())
    }

    pub fn predict(
        &mut self,
        leg: &Leg,
        m: &Measurement,
        segment_id: &str,
    ) -> Result<OceanPrediction> {
        let t = m.timestamp;
        let c_temp = self.temp.correction_at(t)?;
        let c_rh = self.rh.correction_at(t)?;
        let (xt, xh) = ocean_features(&self.models.config, leg, m, c_temp, c_rh, |xt| {
            self.models.temperature.h_ocean.predict(xt)
        })?;
        let temperature = self.models.temperature.h_ocean.predict(&xt)?;
        let humidity = self.models.humidity.h_ocean.predict(&xh)?;
        self.temp.emit(t, segment_id, c_temp)?;
        self.rh.emit(t, segment_id, c_rh)?;
        Ok(OceanPrediction {
            timestamp: t,
            leg_id: m.leg_id.clone(),
            temperature,
            humidity,
            c_temp,
            c_rh,
        })
    }

    /// Observes land points and predicts ocean points.
    pub fn step(&mut self, p: &TimelinePoint<'_>) -> Result<Option<OceanPrediction>> {
        match p.segment.kind {
            SegmentKind::Land => {
                self.observe(p.leg, p.measurement, &p.segment.segment_id)?;
                Ok(None)
            }
            SegmentKind::Ocean => self
                .predict(p.leg, p.measurement, &p.segment.segment_id)
                .map(Some),
        }
    }

    pub fn audit(&self) -> LookAheadAudit {
        let mut a = self.temp.audit();
        a.merge(self.rh.audit());
        a
    }
}

/// Ocean feature vectors for both targets. Humidity needs the temperature
/// estimate, supplied by `h_temp`.
fn ocean_features(
    cfg: &RcmConfig,
    leg: &Leg,
    m: &Measurement,
    c_temp: f64,
    c_rh: f64,
    h_temp: impl FnOnce(&FeatureVector) -> Result<f64>,
) -> Result<(FeatureVector, FeatureVector)> {
    let xt = build_features(
        m,
        leg,
        &cfg.feature_config(Target::Temperature),
        SegmentKind::Ocean,
        AuxInputs {
            correction: Some(c_temp),
            est_temp: None,
        },
    )?;
    let est_temp = h_temp(&xt)?;
    let xh = build_features(
        m,
        leg,
        &cfg.feature_config(Target::Humidity),
        SegmentKind::Ocean,
        AuxInputs {
            correction: Some(c_rh),
            est_temp: Some(est_temp),
        },
    )?;
    Ok((xt, xh))
}

impl AdaptiveModels {
    pub fn config_hash(&self) -> String {
        self.config.hash()
    }

    pub fn target(&self, target: Target) -> &TargetModels {
        match target {
            Target::Temperature => &self.temperature,
            Target::Humidity => &self.humidity,
        }
    }

    pub fn predictor(&self) -> ShipmentPredictor<'_> {
        ShipmentPredictor::new(self)
    }

    /// Streams a whole tagged shipment, returning one prediction per ocean
    /// measurement.
    pub fn predict_shipment(
        &self,
        shipment: &Shipment,
    ) -> Result<(Vec<OceanPrediction>, LookAheadAudit)> {
        let mut p = self.predictor();
        let mut out = Vec::new();
        for point in shipment.timeline() {
            if let Some(pred) = p.step(&point)? {
                out.push(pred);
            }
        }
        Ok((out, p.audit()))
    }

    /// Writes `rcm_config.json` plus one directory of models per target.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for target in Target::ALL {
            let sub = dir.join(target.as_str());
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            let models = self.target(target);
            models.f_land.save(sub.join("f_land.json"))?;
            models.h_ocean.save(sub.join("h_ocean.json"))?;
        }
        let manifest = BundleManifest::from_config(&self.config);
        let path = dir.join("rcm_config.json");
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads a bundle, checking its recorded hash and, when given, that it
    /// matches `expected_hash`.
    pub fn load(dir: impl AsRef<Path>, expected_hash: Option<&str>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("rcm_config.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text)?;
        let config = manifest.to_config();
        let actual = config.hash();
        if actual != manifest.config_hash {
            return Err(Error::ConfigMismatch {
                expected: manifest.config_hash,
                found: actual,
            });
        }
        if let Some(expected) = expected_hash {
            if expected != actual {
                return Err(Error::ConfigMismatch {
                    expected: expected.to_string(),
                    found: actual,
                });
            }
        }
        let load_target = |target: Target| -> Result<TargetModels> {
            let sub = dir.join(target.as_str());
            Ok(TargetModels {
                f_land: LinearModel::load(sub.join("f_land.json"))?,
                h_ocean: LinearModel::load(sub.join("h_ocean.json"))?,
            })
        };
        Ok(AdaptiveModels {
            temperature: load_target(Target::Temperature)?,
            humidity: load_target(Target::Humidity)?,
            config,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleManifest {
    scheme: SelectionScheme,
    weighting: WeightingScheme,
    alpha: f64,
    linear_direction: LinearDirection,
    normalize: bool,
    phi1: f64,
    phi2: f64,
    recursive_training: String,
    config_hash: String,
}

impl BundleManifest {
    fn from_config(c: &RcmConfig) -> Self {
        BundleManifest {
            scheme: c.scheme,
            weighting: c.weighting.scheme,
            alpha: c.weighting.alpha,
            linear_direction: c.weighting.linear_direction,
            normalize: c.weighting.normalize,
            phi1: c.phi1,
            phi2: c.phi2,
            recursive_training: c.recursive_training.clone(),
            config_hash: c.hash(),
        }
    }

    fn to_config(&self) -> RcmConfig {
        RcmConfig {
            scheme: self.scheme,
            weighting: WeightingConfig {
                scheme: self.weighting,
                alpha: self.alpha,
                linear_direction: self.linear_direction,
                normalize: self.normalize,
            },
            phi1: self.phi1,
            phi2: self.phi2,
            recursive_training: self.recursive_training.clone(),
        }
    }
}

/// Ocean rows of one training shipment with their stage-2 corrections.
struct OceanRow<'s> {
    leg: &'s Leg,
    m: &'s Measurement,
    c_temp: f64,
    c_rh: f64,
}

fn rollout<'s>(
    shipment: &'s Shipment,
    f_temp: &LinearModel,
    f_rh: &LinearModel,
    cfg: &RcmConfig,
) -> Result<Vec<OceanRow<'s>>> {
    let mut temp = CorrectionStream::new(f_temp, cfg);
    let mut rh = CorrectionStream::new(f_rh, cfg);
    let mut rows = Vec::new();
    for p in shipment.timeline() {
        let seg = p.segment.segment_id.as_str();
        match p.segment.kind {
            SegmentKind::Land => {
                temp.observe(p.leg, p.measurement, seg)?;
                rh.observe(p.leg, p.measurement, seg)?;
            }
            SegmentKind::Ocean => {
                let t = p.measurement.timestamp;
                let c_temp = temp.correction_at(t)?;
                let c_rh = rh.correction_at(t)?;
                temp.emit(t, seg, c_temp)?;
                rh.emit(t, seg, c_rh)?;
                rows.push(OceanRow {
                    leg: p.leg,
                    m: p.measurement,
                    c_temp,
                    c_rh,
                });
            }
        }
    }
    Ok(rows)
}

/// Trains land and ocean models for both targets on tagged shipments.
pub fn train_adaptive(train: &[Shipment], cfg: &RcmConfig) -> Result<AdaptiveModels> {
    cfg.validate()?;
    for s in train {
        if s.segments.is_empty() && !s.is_empty() {
            return Err(segment_error(s));
        }
    }

    let temp_cfg = cfg.feature_config(Target::Temperature);
    let rh_cfg = cfg.feature_config(Target::Humidity);
    let mut land_temp = Vec::new();
    let mut land_rh = Vec::new();
    let mut ocean_count = 0usize;
    for s in train {
        for p in s.timeline() {
            if p.segment.kind == SegmentKind::Ocean {
                ocean_count += 1;
                continue;
            }
            let m = p.measurement;
            let xt = build_features(m, p.leg, &temp_cfg, SegmentKind::Land, AuxInputs::default())?;
            let xh = build_features(m, p.leg, &rh_cfg, SegmentKind::Land, AuxInputs::default())?;
            land_temp.push((xt, m.internal_temp));
            land_rh.push((xh, m.internal_rh));
        }
    }
    if land_temp.is_empty() {
        return Err(Error::NoRows("land"));
    }
    if ocean_count == 0 {
        return Err(Error::NoRows("ocean"));
    }
    let f_temp = fit_ols(&land_temp, &temp_cfg)?;
    let f_rh = fit_ols(&land_rh, &rh_cfg)?;

    let per_shipment: Vec<Vec<OceanRow<'_>>> = train
        .par_iter()
        .map(|s| rollout(s, &f_temp, &f_rh, cfg))
        .collect::<Result<_>>()?;
    let rows: Vec<OceanRow<'_>> = per_shipment.into_iter().flatten().collect();

    let temp_rows: Vec<(FeatureVector, f64)> = rows
        .iter()
        .map(|r| {
            let aux = AuxInputs {
                correction: Some(r.c_temp),
                est_temp: None,
            };
            let x = build_features(r.m, r.leg, &temp_cfg, SegmentKind::Ocean, aux)?;
            Ok((x, r.m.internal_temp))
        })
        .collect::<Result<_>>()?;
    let h_temp = fit_ols(&temp_rows, &temp_cfg)?;

    let rh_rows: Vec<(FeatureVector, f64)> = rows
        .iter()
        .zip(&temp_rows)
        .map(|(r, (xt, _))| {
            let aux = AuxInputs {
                correction: Some(r.c_rh),
                est_temp: Some(h_temp.predict(xt)?),
            };
            let x = build_features(r.m, r.leg, &rh_cfg, SegmentKind::Ocean, aux)?;
            Ok((x, r.m.internal_rh))
        })
        .collect::<Result<_>>()?;
    let h_rh = fit_ols(&rh_rows, &rh_cfg)?;

    Ok(AdaptiveModels {
        config: cfg.clone(),
        temperature: TargetModels {
            f_land: f_temp,
            h_ocean: h_temp,
        },
        humidity: TargetModels {
            f_land: f_rh,
            h_ocean: h_rh,
        },
    })
}

fn segment_error(s: &Shipment) -> Error {
    let m = s.measurements().find(|m| m.environment.is_none());
    match m {
        Some(m) => Error::Untagged {
            shipment_id: s.shipment_id.clone(),
            timestamp: m.timestamp,
        },
        None => Error::SchemaMismatch(format!("shipment {} has no segments", s.shipment_id)),
    }
}
