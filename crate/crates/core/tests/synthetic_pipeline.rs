use rcm_core::eval::{run_benchmark, BenchmarkConfig, Metric, YearMonth, BASELINE};
use rcm_core::features::{Feature, Target};
use rcm_core::geotag::{ScoringConfig, Tagger};
use rcm_core::rcm::{train_adaptive, AdaptiveModels, RcmConfig, SelectionScheme, WeightingConfig};
use rcm_core::synth::{generate, oracle_correction, synthetic_world, SynthConfig};
use rcm_core::telemetry::Shipment;
use rcm_core::Error;

fn tagged(cfg: &SynthConfig) -> (Vec<Shipment>, rcm_core::synth::GroundTruth) {
    let out = generate(cfg).unwrap();
    let tagger = Tagger::new(synthetic_world(), ScoringConfig::default());
    (tagger.tag_shipments(&out.shipments), out.truth)
}

fn holdout() -> YearMonth {
    "202203".parse().unwrap()
}

#[test]
fn tags_match_intended_kinds() {
    let (shipments, truth) = tagged(&SynthConfig {
        n_shipments: 40,
        ..SynthConfig::default()
    });
    let kinds = truth.leg_kinds();
    for s in &shipments {
        for leg in &s.legs {
            let want = kinds[&(s.shipment_id.clone(), leg.leg_id.clone())];
            assert!(leg.measurements.iter().all(|m| m.kind() == Some(want)));
        }
    }
}

#[test]
fn ocean_model_puts_unit_weight_on_correction() {
    let (shipments, _) = tagged(&SynthConfig::default());
    let cfg = RcmConfig::new(SelectionScheme::Global, WeightingConfig::uniform());
    let models = train_adaptive(&shipments, &cfg).unwrap();
    let h = &models.temperature.h_ocean;
    let i = h
        .feature_names
        .iter()
        .position(|n| n == Feature::ResTemp.as_str())
        .unwrap();
    assert!(
        (h.coefficients[i] - 1.0).abs() < 0.1,
        "{}",
        h.coefficients[i]
    );
}

#[test]
fn zero_residuals_match_ablated_model() {
    // Internal temperature identically zero: the land model is exact, every
    // residual and correction is zero.
    let (mut shipments, _) = tagged(&SynthConfig {
        n_shipments: 30,
        ..SynthConfig::default()
    });
    for s in &mut shipments {
        for leg in &mut s.legs {
            for m in &mut leg.measurements {
                m.internal_temp = 0.0;
            }
        }
        *s = Shipment::new(s.shipment_id.clone(), s.legs.clone());
    }
    let cfg = RcmConfig::new(SelectionScheme::Global, WeightingConfig::uniform());
    let models = train_adaptive(&shipments, &cfg).unwrap();
    let h = &models.temperature.h_ocean;
    let i = h
        .feature_names
        .iter()
        .position(|n| n == Feature::ResTemp.as_str())
        .unwrap();
    assert!(h.coefficients[i].abs() < 1e-6);
    for s in &shipments {
        let (preds, _) = models.predict_shipment(s).unwrap();
        for p in preds {
            assert_eq!(p.c_temp, 0.0);
            assert!(p.temperature.abs() < 1e-6, "{}", p.temperature);
        }
    }
}

#[test]
fn bundle_round_trip_and_hash_guard() {
    let (shipments, _) = tagged(&SynthConfig {
        n_shipments: 30,
        ..SynthConfig::default()
    });
    let cfg = RcmConfig::new(
        SelectionScheme::Recursive,
        WeightingConfig::exponential(0.8),
    );
    let models = train_adaptive(&shipments, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    models.save(dir.path()).unwrap();
    let back = AdaptiveModels::load(dir.path(), Some(&cfg.hash())).unwrap();
    assert_eq!(back, models);
    let other = RcmConfig::new(SelectionScheme::Global, WeightingConfig::uniform()).hash();
    match AdaptiveModels::load(dir.path(), Some(&other)) {
        Err(Error::ConfigMismatch { expected, found }) => {
            assert_eq!(expected, other);
            assert_eq!(found, cfg.hash());
        }
        r => panic!("expected mismatch, got {r:?}"),
    }
}

#[test]
fn biased_shipments_improve_and_corrections_recover_bias() {
    let (shipments, truth) = tagged(&SynthConfig::default());
    let cfg = BenchmarkConfig::new(vec![holdout()], WeightingConfig::uniform(), 1.0, 80.0);
    let out = run_benchmark(&shipments, &cfg).unwrap();
    let r = &out.report;
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.audit.violations, 0);
    assert!(r.audit.checks > 0);
    let base = r
        .value(holdout(), Target::Temperature, Metric::Mae, BASELINE)
        .unwrap();
    for model in ["uniform/global", "linear/global", "exp/global"] {
        let v = r
            .value(holdout(), Target::Temperature, Metric::Mae, model)
            .unwrap();
        assert!(v <= 0.7 * base, "{model}: {v} vs baseline {base}");
    }

    // Uniform/global correction after the first land leg against the recorded bias.
    let models = train_adaptive(
        &out.splits[0].train_set(&shipments),
        &RcmConfig::new(SelectionScheme::Global, WeightingConfig::uniform()),
    )
    .unwrap();
    let mut gaps: Vec<f64> = shipments
        .iter()
        .map(|s| {
            let (preds, _) = models.predict_shipment(s).unwrap();
            let b = oracle_correction(&truth, &s.shipment_id, Target::Temperature).unwrap();
            (preds[0].c_temp - b).abs()
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    assert!(
        gaps[gaps.len() / 2] < 0.5,
        "median {}",
        gaps[gaps.len() / 2]
    );
}

#[test]
fn zero_bias_does_not_hurt() {
    let (shipments, _) = tagged(&SynthConfig {
        bias_std_temp: 0.0,
        bias_std_rh: 0.0,
        ..SynthConfig::default()
    });
    let cfg = BenchmarkConfig::new(vec![holdout()], WeightingConfig::uniform(), 1.0, 80.0);
    let r = run_benchmark(&shipments, &cfg).unwrap().report;
    for p in &r.paired {
        assert!(
            p.difference.within(2.0),
            "{} {}: {:?}",
            p.target,
            p.model,
            p.difference
        );
    }
}

#[test]
fn unbiased_shipments_get_small_corrections() {
    let (shipments, truth) = tagged(&SynthConfig {
        bias_std_temp: 0.0,
        bias_std_rh: 0.0,
        ..SynthConfig::default()
    });
    let models = train_adaptive(
        &shipments,
        &RcmConfig::new(SelectionScheme::Global, WeightingConfig::uniform()),
    )
    .unwrap();
    let mut c: Vec<f64> = shipments
        .iter()
        .map(|s| {
            assert_eq!(
                oracle_correction(&truth, &s.shipment_id, Target::Temperature).unwrap(),
                0.0
            );
            models.predict_shipment(s).unwrap().0[0].c_temp.abs()
        })
        .collect();
    c.sort_by(f64::total_cmp);
    assert!(c[c.len() / 2] < 0.2, "median {}", c[c.len() / 2]);
}
