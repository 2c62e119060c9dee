//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcm_core::eval::{
    mae, make_splits, rmse, run_benchmark, BenchmarkConfig, EvaluationReport, Metric, YearMonth,
    BASELINE,
};
use rcm_core::features::Target;
use rcm_core::geotag::geometry::{haversine_km, point_in_polygon, LatLon};
use rcm_core::geotag::{ScoringConfig, Tagger};
use rcm_core::rcm::{
    correction, train_adaptive, weights, Accumulator, LinearDirection, RcmConfig, SelectionScheme,
    WeightingConfig, WeightingScheme,
};
use rcm_core::regress::{least_squares, Matrix};
use rcm_core::synth::{generate, oracle_correction, synthetic_world, GroundTruth, SynthConfig};
use rcm_core::telemetry::{SegmentKind, Shipment};

type Check = Result<String, String>;

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn all_weightings() -> Vec<WeightingConfig> {
    let mut out = Vec::new();
    for normalize in [true, false] {
        out.push(WeightingConfig {
            normalize,
            ..WeightingConfig::uniform()
        });
        for alpha in [0.5, 0.9, 0.99] {
            out.push(WeightingConfig {
                normalize,
                ..WeightingConfig::exponential(alpha)
            });
        }
    }
    for linear_direction in [LinearDirection::RecentHeavy, LinearDirection::OldestHeavy] {
        out.push(WeightingConfig {
            linear_direction,
            ..WeightingConfig::linear()
        });
    }
    out
}

fn weighting_correctness() -> Check {
    let configs = [
        WeightingConfig::uniform(),
        WeightingConfig::linear(),
        WeightingConfig::exponential(0.9),
        WeightingConfig::exponential(0.5),
    ];
    let mut worst: f64 = 0.0;
    for cfg in &configs {
        for t in 1..=1000 {
            let w = weights(t, cfg);
            let err = (w.iter().sum::<f64>() - 1.0).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || {
                format!("{:?} t={t}: |sum-1| = {err:e}", cfg.scheme)
            })?;
            if cfg.scheme != WeightingScheme::Uniform {
                ensure(w.windows(2).all(|p| p[0] < p[1]), || {
                    format!("{:?} t={t}: weights not strictly increasing", cfg.scheme)
                })?;
            }
        }
    }
    Ok(format!("max |sum-1| = {worst:.1e}"))
}

fn streaming_matches_batch() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let configs = all_weightings();
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let len = rng.random_range(1..=500);
        let series: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        for cfg in &configs {
            let mut acc = Accumulator::new(cfg.alpha);
            for &r in &series {
                acc.push(r);
            }
            let (s, b) = (acc.value(cfg), correction(&series, cfg));
            let err = (s - b).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || format!("series {i} ({cfg:?}): {s} vs {b}"))?;
        }
    }
    Ok(format!("{} configs, max diff {worst:.1e}", configs.len()))
}

/// Gaussian elimination with partial pivoting on XᵀX β = Xᵀy.
fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = rows[0].len();
    let mut a = vec![vec![0.0; n + 1]; n];
    for (r, &yi) in rows.iter().zip(y) {
        for i in 0..n {
            for j in 0..n {
                a[i][j] += r[i] * r[j];
            }
            a[i][n] += r[i] * yi;
        }
    }
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            for j in k..=n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    x
}

fn ols_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_beta, mut worst_resid): (f64, f64) = (0.0, 0.0);
    for case in 0..100 {
        let p = rng.random_range(2..=10);
        let m = rng.random_range(3 * p..=500);
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..p).map(|_| rng.random_range(-3.0..3.0)));
                r
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| {
                r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-1.0..1.0)
            })
            .collect();
        let fit = least_squares(&Matrix::from_rows(&rows).unwrap(), &y, &[0])
            .map_err(|e| e.to_string())?;
        ensure(!fit.ridge && fit.rank == p, || {
            format!("case {case}: unexpected rank {}", fit.rank)
        })?;
        let oracle = normal_equations(&rows, &y);
        let diff = fit
            .coefficients
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let resid = rows
            .iter()
            .zip(&y)
            .map(|(r, yi)| {
                yi - r
                    .iter()
                    .zip(&fit.coefficients)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / m as f64;
        worst_beta = worst_beta.max(diff);
        worst_resid = worst_resid.max(resid.abs());
        ensure(diff <= 1e-8, || {
            format!("case {case} ({m}x{p}): coefficient gap {diff:e}")
        })?;
        ensure(resid.abs() <= 1e-8, || {
            format!("case {case}: mean residual {resid:e}")
        })?;
    }
    Ok(format!(
        "max coefficient gap {worst_beta:.1e}, max |mean residual| {worst_resid:.1e}"
    ))
}

fn tagged(cfg: &SynthConfig) -> (Vec<Shipment>, GroundTruth) {
    let out = generate(cfg).expect("synthetic data");
    let tagger = Tagger::new(synthetic_world(), ScoringConfig::default());
    (tagger.tag_shipments(&out.shipments), out.truth)
}

fn holdout() -> YearMonth {
    YearMonth::new(2022, 3).unwrap()
}

fn synthetic_improvement() -> Check {
    let cfg = SynthConfig::default();
    ensure(
        cfg.bias_std_temp == 2.0 && cfg.noise_std_temp == 1.0 && cfg.n_shipments == 200,
        || "default synthetic settings changed".into(),
    )?;
    let (shipments, _) = tagged(&cfg);
    for s in &shipments {
        let first = &s.legs[0];
        ensure(
            first
                .measurements
                .iter()
                .all(|m| m.kind() == Some(SegmentKind::Land))
                && first.measurements.len() >= 50,
            || {
                format!(
                    "{}: short land history before the first ocean leg",
                    s.shipment_id
                )
            },
        )?;
    }
    let bench = BenchmarkConfig::new(vec![holdout()], WeightingConfig::uniform(), 1.0, 80.0);
    let r = run_benchmark(&shipments, &bench)
        .map_err(|e| e.to_string())?
        .report;
    ensure(r.failures.is_empty(), || {
        format!("variant failures: {:?}", r.failures)
    })?;
    let base = r
        .value(holdout(), Target::Temperature, Metric::Mae, BASELINE)
        .ok_or("no baseline cell")?;
    let mut worst: f64 = 0.0;
    for model in r.models.iter().filter(|m| m.ends_with("/global")) {
        let v = r
            .value(holdout(), Target::Temperature, Metric::Mae, model)
            .ok_or_else(|| format!("no {model} cell"))?;
        let reduction = 1.0 - v / base;
        worst = worst.max(v / base);
        ensure(reduction >= 0.30, || {
            format!("{model}: MAE {v:.3} vs baseline {base:.3}")
        })?;
    }
    Ok(format!(
        "baseline MAE {base:.3}, worst global ratio {worst:.3}"
    ))
}

fn bias_recovery() -> Check {
    let (shipments, truth) = tagged(&SynthConfig::default());
    let split = make_splits(&shipments, &[holdout()])
        .map_err(|e| e.to_string())?
        .remove(0);
    let cfg = RcmConfig::new(SelectionScheme::Global, WeightingConfig::uniform());
    let models = train_adaptive(&split.train_set(&shipments), &cfg).map_err(|e| e.to_string())?;
    let mut gaps = Vec::new();
    for s in &shipments {
        let (preds, _) = models.predict_shipment(s).map_err(|e| e.to_string())?;
        let b = oracle_correction(&truth, &s.shipment_id, Target::Temperature)
            .map_err(|e| e.to_string())?;
        let first = preds
            .first()
            .ok_or_else(|| format!("{}: no ocean prediction", s.shipment_id))?;
        gaps.push((first.c_temp - b).abs());
    }
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    ensure(median < 0.5, || format!("median |c - b| = {median:.3}"))?;
    Ok(format!(
        "median |c - b| = {median:.3} over {} shipments",
        gaps.len()
    ))
}

fn zero_bias_null() -> Check {
    let (shipments, _) = tagged(&SynthConfig {
        bias_std_temp: 0.0,
        bias_std_rh: 0.0,
        ..SynthConfig::default()
    });
    let bench = BenchmarkConfig::new(vec![holdout()], WeightingConfig::uniform(), 1.0, 80.0);
    let r = run_benchmark(&shipments, &bench)
        .map_err(|e| e.to_string())?
        .report;
    ensure(r.paired.len() == 18, || {
        format!("{} paired cells, expected 18", r.paired.len())
    })?;
    let mut worst: f64 = 0.0;
    for p in &r.paired {
        let d = p.difference;
        worst = worst.max(d.mean.abs() / d.std_error.max(f64::MIN_POSITIVE));
        ensure(d.within(2.0), || {
            format!(
                "{} {}: mean {:.4}, se {:.4}",
                p.target, p.model, d.mean, d.std_error
            )
        })?;
    }
    Ok(format!(
        "{} cells, worst |mean|/se = {worst:.2}",
        r.paired.len()
    ))
}

fn split_integrity() -> Check {
    let (shipments, _) = tagged(&SynthConfig {
        n_shipments: 80,
        ..SynthConfig::default()
    });
    let months = vec![
        YearMonth::new(2022, 2).unwrap(),
        YearMonth::new(2022, 3).unwrap(),
    ];
    let splits = make_splits(&shipments, &months).map_err(|e| e.to_string())?;
    for s in &splits {
        ensure(s.train_legs.is_disjoint(&s.test_legs), || {
            format!("{}: leg in both train and test", s.test_month)
        })?;
        ensure(!s.test_legs.is_empty(), || {
            format!("{}: empty test set", s.test_month)
        })?;
    }
    for w in splits.windows(2) {
        let (a, b): (&BTreeSet<_>, &BTreeSet<_>) = (&w[0].train_legs, &w[1].train_legs);
        ensure(a.is_subset(b), || {
            format!("train set shrinks at {}", w[1].test_month)
        })?;
    }
    let bench = BenchmarkConfig::new(months, WeightingConfig::uniform(), 1.0, 80.0);
    let r = run_benchmark(&shipments, &bench)
        .map_err(|e| e.to_string())?
        .report;
    ensure(r.audit.checks > 0, || {
        "look-ahead audit ran no checks".into()
    })?;
    ensure(r.audit.violations == 0, || {
        format!("{} look-ahead violations", r.audit.violations)
    })?;
    Ok(format!(
        "{} splits, audit {} checks, 0 violations",
        splits.len(),
        r.audit.checks
    ))
}

fn winding_number(p: LatLon, ring: &[LatLon]) -> i32 {
    let cross = |a: LatLon, b: LatLon| {
        (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat)
    };
    let mut wn = 0;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.lat <= p.lat {
            if b.lat > p.lat && cross(a, b) > 0.0 {
                wn += 1;
            }
        } else if b.lat <= p.lat && cross(a, b) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

fn random_polygon(rng: &mut ChaCha8Rng) -> Vec<LatLon> {
    let (clat, clon) = (
        rng.random_range(-40.0..40.0),
        rng.random_range(-150.0..150.0),
    );
    let n = rng.random_range(3..=12);
    let mut angles: Vec<f64> = (0..n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    angles.sort_by(f64::total_cmp);
    let mut ring: Vec<LatLon> = angles
        .iter()
        .map(|a| {
            let r = rng.random_range(1.0..15.0);
            LatLon::new(clat + r * a.sin(), clon + r * a.cos())
        })
        .collect();
    ring.push(ring[0]);
    ring
}

fn geometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let polygons: Vec<Vec<LatLon>> = (0..20).map(|_| random_polygon(&mut rng)).collect();
    let mut inside = 0;
    for i in 0..10_000 {
        // sample inside the bounding box of one polygon so both outcomes occur
        let ring = &polygons[i % polygons.len()];
        let (lat0, lat1) = ring.iter().fold((f64::MAX, f64::MIN), |(a, b), q| {
            (a.min(q.lat), b.max(q.lat))
        });
        let (lon0, lon1) = ring.iter().fold((f64::MAX, f64::MIN), |(a, b), q| {
            (a.min(q.lon), b.max(q.lon))
        });
        let p = LatLon::new(rng.random_range(lat0..lat1), rng.random_range(lon0..lon1));
        for (k, ring) in polygons.iter().enumerate() {
            let want = winding_number(p, ring) != 0;
            let got = point_in_polygon(p, ring, &[]);
            inside += got as usize;
            ensure(got == want, || {
                format!("point {i} polygon {k}: {got} vs oracle {want}")
            })?;
        }
    }
    let d = haversine_km(LatLon::new(0.0, 0.0), LatLon::new(0.0, 1.0));
    ensure((d - 111.19).abs() <= 0.01, || {
        format!("haversine (0,0)-(0,1) = {d:.4} km")
    })?;

    let (shipments, truth) = tagged(&SynthConfig::default());
    let kinds = truth.leg_kinds();
    let (mut total, mut agree) = (0usize, 0usize);
    for s in &shipments {
        for leg in &s.legs {
            let want = kinds[&(s.shipment_id.clone(), leg.leg_id.clone())];
            for m in &leg.measurements {
                total += 1;
                agree += (m.kind() == Some(want)) as usize;
            }
        }
    }
    ensure(agree == total, || {
        format!("geotag agreement {agree}/{total}")
    })?;
    Ok(format!(
        "200000 containment checks ({inside} inside), haversine {d:.3} km, geotag {agree}/{total}"
    ))
}

fn metrics_sanity() -> Check {
    let (a, b) = (
        mae(&[1.0, 2.0], &[2.0, 4.0]).map_err(|e| e.to_string())?,
        rmse(&[1.0, 2.0], &[2.0, 4.0]).map_err(|e| e.to_string())?,
    );
    ensure((a - 1.5).abs() <= 1e-12, || format!("MAE fixture {a}"))?;
    ensure((b - 2.5f64.sqrt()).abs() <= 1e-12, || {
        format!("RMSE fixture {b}")
    })?;

    let (shipments, _) = tagged(&SynthConfig {
        n_shipments: 60,
        ..SynthConfig::default()
    });
    let months = vec![
        YearMonth::new(2022, 2).unwrap(),
        YearMonth::new(2022, 3).unwrap(),
    ];
    let bench = BenchmarkConfig::new(months.clone(), WeightingConfig::uniform(), 1.0, 80.0);
    let r = run_benchmark(&shipments, &bench)
        .map_err(|e| e.to_string())?
        .report;
    let mut cells = 0;
    for &t in &Target::ALL {
        for model in &r.models {
            for &m in &months {
                let e1 = r
                    .value(m, t, Metric::Mae, model)
                    .ok_or("missing MAE cell")?;
                let e2 = r
                    .value(m, t, Metric::Rmse, model)
                    .ok_or("missing RMSE cell")?;
                ensure(e2 >= e1, || {
                    format!("{m} {t} {model}: RMSE {e2} < MAE {e1}")
                })?;
                cells += 1;
            }
            for metric in [Metric::Mae, Metric::Rmse] {
                let recomputed = months
                    .iter()
                    .map(|&m| r.value(m, t, metric, model).unwrap())
                    .sum::<f64>()
                    / months.len() as f64;
                let avg = r.average(t, metric, model).ok_or("missing average")?;
                ensure((avg - recomputed).abs() <= 1e-12, || {
                    format!("{t} {model} average {avg} vs {recomputed}")
                })?;
            }
        }
    }
    Ok(format!("fixture 1.5 / {b:.4}, {cells} month cells checked"))
}

fn rcm(dir: &Path, config: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rcm"))
        .current_dir(dir)
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "rcm {}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn end_to_end() -> Check {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for step in [
        &["simulate"][..],
        &["tag"],
        &["train"],
        &["evaluate", "--models", "out/models"],
        &["report"],
    ] {
        rcm(tmp.path(), &config, step)?;
    }
    let r = EvaluationReport::load_json(tmp.path().join("out/evaluate/report.json"))
        .map_err(|e| e.to_string())?;
    ensure(r.models.len() == 10 && r.models[0] == BASELINE, || {
        format!("model columns: {:?}", r.models)
    })?;
    let months = r.months();
    let mut tables = 0;
    for &t in &Target::ALL {
        for metric in [Metric::Mae, Metric::Rmse] {
            for model in &r.models {
                for &m in &months {
                    ensure(r.value(m, t, metric, model).is_some(), || {
                        format!("empty cell {m} {t} {metric:?} {model}")
                    })?;
                }
            }
            tables += 1;
        }
    }
    let md = std::fs::read_to_string(tmp.path().join("out/report/report.md"))
        .map_err(|e| e.to_string())?;
    let header = format!("| YYYYMM | {} |", r.models.join(" | "));
    let headers = md.lines().filter(|l| *l == header).count();
    ensure(headers == 4, || format!("{headers} Markdown tables"))?;
    Ok(format!(
        "{} models x {tables} tables over {} months",
        r.models.len(),
        months.len()
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "weighting correctness",
            limit: Duration::from_secs(1),
            run: weighting_correctness,
        },
        Criterion {
            name: "streaming equals batch",
            limit: Duration::from_secs(30),
            run: streaming_matches_batch,
        },
        Criterion {
            name: "least squares oracle",
            limit: Duration::from_secs(10),
            run: ols_oracle,
        },
        Criterion {
            name: "synthetic improvement",
            limit: Duration::from_secs(120),
            run: synthetic_improvement,
        },
        Criterion {
            name: "bias recovery",
            limit: Duration::from_secs(120),
            run: bias_recovery,
        },
        Criterion {
            name: "zero-bias null",
            limit: Duration::from_secs(120),
            run: zero_bias_null,
        },
        Criterion {
            name: "split integrity",
            limit: Duration::from_secs(120),
            run: split_integrity,
        },
        Criterion {
            name: "geometry",
            limit: Duration::from_secs(60),
            run: geometry,
        },
        Criterion {
            name: "metrics sanity",
            limit: Duration::from_secs(60),
            run: metrics_sanity,
        },
        Criterion {
            name: "end to end",
            limit: Duration::from_secs(300),
            run: end_to_end,
        },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; took longer than {:?}", c.limit)),
            Err(e) => (false, e),
        };
        failed += !ok as usize;
        println!(
            "{} {:>2} {:<24} {:>7.2}s  {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
