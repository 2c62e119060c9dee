//! Baseline and adaptive models trained and scored on every split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mae, rmse, PairedDifference};
use super::report::{EvaluationReport, Metric, ReportMeta, ReportRow, BASELINE};
use super::splits::{make_splits, LegKey, SplitSpec, YearMonth};
use crate::error::{Error, Result};
use crate::features::{build_features, AuxInputs, FeatureConfig, ModelKind, Target};
use crate::rcm::{train_adaptive, LookAheadAudit, RcmConfig, WeightingConfig, WeightingScheme};
use crate::regress::{clamp_for_report, fit_ols, LinearModel};
use crate::telemetry::{Leg, Measurement, SegmentKind, Shipment, Timestamp};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub months: Vec<YearMonth>,
    pub variants: Vec<RcmConfig>,
    pub phi1: f64,
    pub phi2: f64,
    pub clamp_humidity: bool,
    /// Parallel splits; `None` uses every core.
    pub workers: Option<usize>,
}

impl BenchmarkConfig {
    /// The nine standard variants built from `weighting`'s alpha, linear
    /// direction and normalization.
    pub fn new(months: Vec<YearMonth>, weighting: WeightingConfig, phi1: f64, phi2: f64) -> Self {
        BenchmarkConfig {
            months,
            variants: RcmConfig::variants(&weighting, phi1, phi2),
            phi1,
            phi2,
            clamp_humidity: true,
            workers: None,
        }
    }

    fn meta(&self) -> ReportMeta {
        let w = self
            .variants
            .first()
            .map(|v| v.weighting)
            .unwrap_or_else(|| WeightingConfig::new(WeightingScheme::Uniform));
        ReportMeta {
            months: self.months.clone(),
            phi1: self.phi1,
            phi2: self.phi2,
            alpha: w.alpha,
            linear_direction: w.linear_direction,
            normalize: w.normalize,
            humidity_clamp: self.clamp_humidity,
            recursive_training: crate::rcm::RECURSIVE_TRAINING.to_string(),
        }
    }
}

/// Prediction error of one model at one ocean test measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub shipment_id: String,
    pub leg_id: String,
    pub timestamp: Timestamp,
    pub target: Target,
    pub truth: f64,
    pub prediction: f64,
    pub error: f64,
}

/// All point errors of one model in one month.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorDump {
    pub month: YearMonth,
    pub model: String,
    pub points: Vec<PointError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub report: EvaluationReport,
    pub errors: Vec<ErrorDump>,
    pub splits: Vec<SplitSpec>,
}

/// Trains and scores the baseline and every variant on each split.
pub fn run_benchmark(dataset: &[Shipment], cfg: &BenchmarkConfig) -> Result<BenchmarkOutput> {
    for v in &cfg.variants {
        v.validate()?;
    }
    if let Some(s) = dataset.iter().find(|s| !s.is_tagged()) {
        let m = s.measurements().find(|m| m.environment.is_none());
        return Err(Error::Untagged {
            shipment_id: s.shipment_id.clone(),
            timestamp: m.map(|m| m.timestamp).unwrap_or_default(),
        });
    }
    let splits = make_splits(dataset, &cfg.months)?;
    let run = || -> Vec<SplitOutcome> {
        splits
            .par_iter()
            .map(|spec| run_split(dataset, spec, cfg))
            .collect()
    };
    let outcomes = match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };

    let mut models = vec![BASELINE.to_string()];
    models.extend(cfg.variants.iter().map(|v| v.label()));
    let mut report = EvaluationReport::new(cfg.meta(), models);
    let mut errors = Vec::new();
    for (spec, outcome) in splits.iter().zip(outcomes) {
        if let Some(reason) = &spec.skipped {
            report.skipped.push((spec.test_month, reason.clone()));
            continue;
        }
        report.audit.merge(outcome.audit);
        report.failures.extend(outcome.failures);
        report.rows.extend(outcome.rows);
        report.paired.extend(outcome.paired);
        errors.extend(outcome.errors);
    }
    Ok(BenchmarkOutput {
        report,
        errors,
        splits,
    })
}

/// A failed model in one split; its report cells stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantFailure {
    pub month: YearMonth,
    pub model: String,
    pub error: String,
}

/// Paired difference of absolute errors, variant minus baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub month: YearMonth,
    pub target: Target,
    pub model: String,
    pub difference: PairedDifference,
}

#[derive(Default)]
struct SplitOutcome {
    rows: Vec<ReportRow>,
    errors: Vec<ErrorDump>,
    failures: Vec<VariantFailure>,
    paired: Vec<PairedSummary>,
    audit: LookAheadAudit,
}

struct TestPoint<'a> {
    leg: &'a Leg,
    m: &'a Measurement,
}

/// Predictions for both targets, aligned with the split's test points.
struct Predictions {
    temperature: Vec<f64>,
    humidity: Vec<f64>,
}

impl Predictions {
    fn get(&self, t: Target) -> &[f64] {
        match t {
            Target::Temperature => &self.temperature,
            Target::Humidity => &self.humidity,
        }
    }
}

fn run_split(dataset: &[Shipment], spec: &SplitSpec, cfg: &BenchmarkConfig) -> SplitOutcome {
    let mut out = SplitOutcome::default();
    if spec.skipped.is_some() {
        return out;
    }
    let month = spec.test_month;
    let train = spec.train_set(dataset);
    let history = spec.history_set(dataset);
    let timelines: Vec<_> = history.iter().map(|s| s.timeline()).collect();
    let points: Vec<TestPoint<'_>> = timelines
        .iter()
        .flatten()
        .filter(|p| p.segment.kind == SegmentKind::Ocean && spec.is_test(p.leg))
        .map(|p| TestPoint {
            leg: p.leg,
            m: p.measurement,
        })
        .collect();

    let baseline = baseline_predictions(&train, &points, cfg);
    let baseline = record(&mut out, month, BASELINE, &points, baseline, cfg, None);

    for variant in &cfg.variants {
        let label = variant.label();
        let preds = train_adaptive(&train, variant).and_then(|models| {
            let mut temperature = Vec::with_capacity(points.len());
            let mut humidity = Vec::with_capacity(points.len());
            for s in &history {
                let (preds, audit) = models.predict_shipment(s)?;
                out.audit.merge(audit);
                for p in preds {
                    let key = LegKey {
                        shipment_id: s.shipment_id.clone(),
                        leg_id: p.leg_id.clone(),
                    };
                    if spec.test_legs.contains(&key) {
                        temperature.push(p.temperature);
                        humidity.push(p.humidity);
                    }
                }
            }
            if temperature.len() != points.len() {
                return Err(Error::LengthMismatch {
                    left: temperature.len(),
                    right: points.len(),
                });
            }
            Ok(Predictions {
                temperature,
                humidity,
            })
        });
        record(
            &mut out,
            month,
            &label,
            &points,
            preds,
            cfg,
            baseline.as_ref(),
        );
    }
    out
}

fn baseline_predictions(
    train: &[Shipment],
    points: &[TestPoint<'_>],
    cfg: &BenchmarkConfig,
) -> Result<Predictions> {
    let predict = |target: Target| -> Result<Vec<f64>> {
        let fc = FeatureConfig::new(target, ModelKind::Baseline).with_phi(cfg.phi1, cfg.phi2);
        let rows = train
            .iter()
            .flat_map(|s| s.legs.iter())
            .flat_map(|leg| leg.measurements.iter().map(move |m| (leg, m)))
            .map(|(leg, m)| {
                let x = build_features(m, leg, &fc, SegmentKind::Land, AuxInputs::default())?;
                Ok((x, target.truth(m)))
            })
            .collect::<Result<Vec<_>>>()?;
        let model: LinearModel = fit_ols(&rows, &fc)?;
        points
            .iter()
            .map(|p| {
                let x = build_features(p.m, p.leg, &fc, SegmentKind::Ocean, AuxInputs::default())?;
                model.predict(&x)
            })
            .collect()
    };
    Ok(Predictions {
        temperature: predict(Target::Temperature)?,
        humidity: predict(Target::Humidity)?,
    })
}

/// Adds cells, dumps and paired differences for one model. Returns the
/// absolute errors per target for later pairing.
fn record(
    out: &mut SplitOutcome,
    month: YearMonth,
    model: &str,
    points: &[TestPoint<'_>],
    preds: Result<Predictions>,
    cfg: &BenchmarkConfig,
    baseline_abs: Option<&[Vec<f64>; 2]>,
) -> Option<[Vec<f64>; 2]> {
    let preds = match preds {
        Ok(p) => p,
        Err(e) => {
            log::error!("{month} {model}: {e}");
            out.failures.push(VariantFailure {
                month,
                model: model.to_string(),
                error: e.to_string(),
            });
            for target in Target::ALL {
                for metric in Metric::ALL {
                    out.rows.push(ReportRow {
                        month,
                        target,
                        metric,
                        model: model.to_string(),
                        value: None,
                    });
                }
            }
            return None;
        }
    };
    let mut dump = Vec::with_capacity(points.len() * 2);
    let mut abs_errors: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (ti, target) in Target::ALL.into_iter().enumerate() {
        let raw = preds.get(target);
        let pred: Vec<f64> = raw
            .iter()
            .map(|&v| {
                if cfg.clamp_humidity {
                    clamp_for_report(target, v)
                } else {
                    v
                }
            })
            .collect();
        let truth: Vec<f64> = points.iter().map(|p| target.truth(p.m)).collect();
        for (metric, f) in [
            (Metric::Mae, mae as fn(&[f64], &[f64]) -> Result<f64>),
            (Metric::Rmse, rmse),
        ] {
            out.rows.push(ReportRow {
                month,
                target,
                metric,
                model: model.to_string(),
                value: f(&pred, &truth).ok(),
            });
        }
        for ((p, y), tp) in pred.iter().zip(&truth).zip(points) {
            dump.push(PointError {
                shipment_id: tp.m.shipment_id.clone(),
                leg_id: tp.m.leg_id.clone(),
                timestamp: tp.m.timestamp,
                target,
                truth: *y,
                prediction: *p,
                error: p - y,
            });
        }
        abs_errors[ti] = pred
            .iter()
            .zip(&truth)
            .map(|(p, y)| (p - y).abs())
            .collect();
        if let Some(base) = baseline_abs {
            if let Ok(difference) = PairedDifference::new(&abs_errors[ti], &base[ti]) {
                out.paired.push(PairedSummary {
                    month,
                    target,
                    model: model.to_string(),
                    difference,
                });
            }
        }
    }
    out.errors.push(ErrorDump {
        month,
        model: model.to_string(),
        points: dump,
    });
    Some(abs_errors)
}
