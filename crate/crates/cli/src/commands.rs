//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use rcm_core::eval::{
    error_dump_name, histogram, make_splits, read_error_dump, run_benchmark, write_error_dump,
    write_histogram, BenchmarkConfig, EvaluationReport, YearMonth,
};
use rcm_core::features::{
    build_features, schema_json, AuxInputs, FeatureConfig, ModelKind, Target,
};
use rcm_core::geotag::{parse_geofile, Tagger};
use rcm_core::rcm::{train_adaptive, AdaptiveModels};
use rcm_core::regress::fit_ols;
use rcm_core::synth::generate;
use rcm_core::telemetry::{ingest, write_csv, write_rejects, ColumnMapping, SegmentKind, Shipment};
use serde_json::json;

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::{Cli, Command};

type Outcome<T = ()> = Result<T, Failure>;

/// Effective configuration plus the flag overrides that produced it.
struct Effective {
    config: RunConfig,
    overrides: Vec<String>,
    force: bool,
}

impl Effective {
    fn note(&mut self, flag: &str, value: impl std::fmt::Display) {
        log::info!("--{flag} overrides config: {value}");
        self.overrides.push(format!("--{flag}={value}"));
    }

    /// Creates `<output>/<name>` and writes provenance into it.
    fn output_dir(&self, name: &str) -> Outcome<PathBuf> {
        let dir = self.config.paths.output.join(name);
        if dir.exists() {
            let occupied = fs::read_dir(&dir)
                .map_err(|e| io_failure(&dir, e))?
                .next()
                .is_some();
            if occupied && !self.force {
                return Err(Failure::new(
                    "output_exists",
                    format!("{} exists; pass --force to replace it", dir.display()),
                ));
            }
            fs::remove_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        write_text(&dir.join("config.toml"), &self.config.to_toml())?;
        let provenance = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": name,
            "overrides": self.overrides,
        });
        write_text(
            &dir.join("provenance.json"),
            &serde_json::to_string_pretty(&provenance)?,
        )?;
        Ok(dir)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new("io", format!("{}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn create(path: &Path) -> Outcome<fs::File> {
    fs::File::create(path).map_err(|e| io_failure(path, e))
}

pub fn run(cli: Cli) -> Outcome {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut eff = Effective {
        config,
        overrides: Vec::new(),
        force: cli.force,
    };
    if let Some(out) = cli.output {
        eff.note("output", out.display());
        eff.config.paths.output = out;
    }
    if cli.emit_schema {
        let f = &eff.config.features;
        println!(
            "{}",
            serde_json::to_string_pretty(&schema_json(f.phi1, f.phi2))?
        );
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::new("usage", "no command given; see --help"));
    };
    match command {
        Command::Simulate { seed, shipments } => simulate(eff, seed, shipments),
        Command::Tag { data, geofile } => tag(eff, data, geofile),
        Command::Split { data, months } => split(eff, data, months),
        Command::Train { data, month } => train(eff, data, month),
        Command::Evaluate {
            data,
            models,
            workers,
            months,
        } => evaluate(eff, data, models, workers, months),
        Command::Report { input } => report(eff, input),
    }
}

fn simulate(mut eff: Effective, seed: Option<u64>, shipments: Option<usize>) -> Outcome {
    if let Some(seed) = seed {
        eff.note("seed", seed);
        eff.config.seed = seed;
    }
    if let Some(n) = shipments {
        eff.note("shipments", n);
        let mut synth = eff.config.synth();
        synth.n_shipments = n;
        eff.config.synth = Some(synth);
    }
    let synth = eff.config.synth();
    let out = generate(&synth)?;
    let dir = eff.output_dir("simulate")?;
    out.write(&dir)?;
    println!(
        "simulated {} shipments ({} measurements) into {}",
        out.shipments.len(),
        out.shipments.iter().map(Shipment::len).sum::<usize>(),
        dir.display()
    );
    Ok(())
}

fn load_data(path: &Path) -> Outcome<Vec<Shipment>> {
    let report = ingest(path, &ColumnMapping::default())?;
    if !report.rejects.is_empty() {
        log::warn!("{}: {} rows rejected", path.display(), report.rejects.len());
    }
    Ok(report.shipments)
}

fn data_override(eff: &mut Effective, data: Option<PathBuf>) -> PathBuf {
    match data {
        Some(d) => {
            eff.note("data", d.display());
            d
        }
        None => eff.config.tagged_data(),
    }
}

fn tag(mut eff: Effective, data: Option<PathBuf>, geofile: Option<PathBuf>) -> Outcome {
    if let Some(d) = data {
        eff.note("data", d.display());
        eff.config.paths.data = d;
    }
    if let Some(g) = geofile {
        eff.note("geofile", g.display());
        eff.config.paths.geofile = g;
    }
    let report = ingest(&eff.config.paths.data, &ColumnMapping::default())?;
    let geo = parse_geofile(&eff.config.paths.geofile)?;
    let tagger = Tagger::new(geo.items, eff.config.geotag.clone());
    let tagged = tagger.tag_shipments(&report.shipments);

    let dir = eff.output_dir("tag")?;
    write_csv(&tagged, create(&dir.join("telemetry.csv"))?)?;
    write_rejects(&report, create(&dir.join("rejects.csv"))?)?;
    let mut counts = std::collections::BTreeMap::<&str, usize>::new();
    for m in tagged.iter().flat_map(Shipment::measurements) {
        if let Some(t) = m.environment {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let summary = json!({
        "shipments": tagged.len(),
        "measurements": report.measurement_count(),
        "rejects": report.rejects.len(),
        "nodes_dropped": report.nodes_dropped,
        "unknown_labels": geo.unknown_labels,
        "tags": counts,
    });
    write_text(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    println!(
        "tagged {} measurements ({} rejected) into {}",
        report.measurement_count(),
        report.rejects.len(),
        dir.display()
    );
    Ok(())
}

fn months_override(eff: &mut Effective, months: Vec<YearMonth>) -> Outcome {
    if !months.is_empty() {
        let text: Vec<String> = months.iter().map(|m| m.to_string()).collect();
        eff.note("months", text.join(","));
        eff.config.months = months;
    }
    eff.config.validate()
}

fn split(mut eff: Effective, data: Option<PathBuf>, months: Vec<YearMonth>) -> Outcome {
    let data = data_override(&mut eff, data);
    months_override(&mut eff, months)?;
    let shipments = load_data(&data)?;
    let splits = make_splits(&shipments, &eff.config.months)?;
    let dir = eff.output_dir("splits")?;
    let mut index = Vec::new();
    for s in &splits {
        write_text(
            &dir.join(format!("split_{}.json", s.test_month)),
            &serde_json::to_string_pretty(s)?,
        )?;
        index.push(json!({
            "month": s.test_month,
            "cutoff": s.cutoff,
            "month_end": s.month_end,
            "train_legs": s.train_legs.len(),
            "test_legs": s.test_legs.len(),
            "train_rows": s.train_rows,
            "ocean_test_rows": s.ocean_test_rows,
            "skipped": s.skipped,
        }));
    }
    write_text(
        &dir.join("splits.json"),
        &serde_json::to_string_pretty(&index)?,
    )?;
    println!(
        "wrote {} split manifests into {}",
        splits.len(),
        dir.display()
    );
    Ok(())
}

fn bundle_dir(label: &str) -> String {
    label.replace('/', "-")
}

fn train(mut eff: Effective, data: Option<PathBuf>, month: Option<YearMonth>) -> Outcome {
    let data = data_override(&mut eff, data);
    eff.config.validate()?;
    let month = match month {
        Some(m) => {
            eff.note("month", m);
            m
        }
        None => *eff.config.months.last().expect("validated months"),
    };
    let shipments = load_data(&data)?;
    let split = make_splits(&shipments, &[month])?.remove(0);
    let train = split.train_set(&shipments);
    if train.is_empty() {
        return Err(Failure::new(
            "no_rows",
            format!("no legs completed before {month}"),
        ));
    }
    let dir = eff.output_dir("models")?;

    let base_dir = dir.join("baseline");
    fs::create_dir_all(&base_dir).map_err(|e| io_failure(&base_dir, e))?;
    for target in Target::ALL {
        let fc = FeatureConfig::new(target, ModelKind::Baseline)
            .with_phi(eff.config.features.phi1, eff.config.features.phi2);
        let rows = train
            .iter()
            .flat_map(|s| s.legs.iter())
            .flat_map(|leg| leg.measurements.iter().map(move |m| (leg, m)))
            .map(|(leg, m)| {
                let x = build_features(m, leg, &fc, SegmentKind::Land, AuxInputs::default())?;
                Ok((x, target.truth(m)))
            })
            .collect::<rcm_core::Result<Vec<_>>>()?;
        fit_ols(&rows, &fc)?.save(base_dir.join(format!("{}.json", target.as_str())))?;
    }

    let mut manifest = Vec::new();
    for variant in eff.config.variants() {
        let models = train_adaptive(&train, &variant)?;
        let name = bundle_dir(&variant.label());
        models.save(dir.join(&name))?;
        manifest.push(json!({
            "label": variant.label(),
            "dir": name,
            "config_hash": variant.hash(),
        }));
    }
    let manifest = json!({"month": month, "cutoff": split.cutoff, "variants": manifest});
    write_text(
        &dir.join("models.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    println!(
        "trained baseline and {} variants on legs completed before {} into {}",
        eff.config.variants().len(),
        split.cutoff.format("%Y-%m-%d"),
        dir.display()
    );
    Ok(())
}

fn evaluate(
    mut eff: Effective,
    data: Option<PathBuf>,
    models: Option<PathBuf>,
    workers: Option<usize>,
    months: Vec<YearMonth>,
) -> Outcome {
    let data = data_override(&mut eff, data);
    months_override(&mut eff, months)?;
    if let Some(n) = workers {
        eff.note("workers", n);
        eff.config.evaluate.workers = Some(n);
    }
    let variants = eff.config.variants();
    if let Some(models) = &models {
        for v in &variants {
            let path = models.join(bundle_dir(&v.label()));
            AdaptiveModels::load(&path, Some(&v.hash())).map_err(|e| {
                let f = Failure::from(e);
                Failure::new(f.code, format!("{}: {}", path.display(), f.message))
            })?;
        }
        log::info!("{} bundles match the run configuration", variants.len());
    }
    let shipments = load_data(&data)?;
    let mut bench = BenchmarkConfig::new(
        eff.config.months.clone(),
        eff.config.base_weighting(),
        eff.config.features.phi1,
        eff.config.features.phi2,
    );
    bench.variants = variants;
    bench.clamp_humidity = eff.config.evaluate.clamp_humidity;
    bench.workers = eff.config.evaluate.workers;
    let out = run_benchmark(&shipments, &bench)?;

    let dir = eff.output_dir("evaluate")?;
    out.report.write_csv(create(&dir.join("report.csv"))?)?;
    out.report.save_json(dir.join("report.json"))?;
    for dump in &out.errors {
        let path = dir.join(error_dump_name(dump.month, &dump.model));
        write_error_dump(&dump.points, create(&path)?)?;
    }
    let r = &out.report;
    println!(
        "evaluated {} months, {} models; {} failures; look-ahead audit {} checks, {} violations; output in {}",
        r.months().len(),
        r.models.len(),
        r.failures.len(),
        r.audit.checks,
        r.audit.violations,
        dir.display()
    );
    if r.audit.violations > 0 {
        return Err(Failure::new(
            "look_ahead",
            format!("{} look-ahead violations", r.audit.violations),
        ));
    }
    Ok(())
}

fn report(eff: Effective, input: Option<PathBuf>) -> Outcome {
    let input = input.unwrap_or_else(|| eff.config.paths.output.join("evaluate"));
    let r = EvaluationReport::load_json(input.join("report.json"))?;
    let mut dumps = Vec::new();
    for month in r.months() {
        for model in &r.models {
            let path = input.join(error_dump_name(month, model));
            if !path.exists() {
                continue;
            }
            let f = fs::File::open(&path).map_err(|e| io_failure(&path, e))?;
            dumps.push((model.clone(), read_error_dump(f)?));
        }
    }
    let bins = histogram(
        dumps
            .iter()
            .flat_map(|(model, pts)| pts.iter().map(move |p| (model.as_str(), p))),
    );
    let dir = eff.output_dir("report")?;
    let md = r.to_markdown();
    write_text(&dir.join("report.md"), &md)?;
    write_histogram(&bins, create(&dir.join("histogram.csv"))?)?;
    print!("{md}");
    Ok(())
}
