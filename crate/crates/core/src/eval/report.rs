//! Report tables: CSV, Markdown, JSON, error dumps and histograms.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmark::{PairedSummary, PointError, VariantFailure};
use super::splits::YearMonth;
use crate::error::{Error, Result};
use crate::features::Target;
use crate::rcm::{LinearDirection, LookAheadAudit};

pub const BASELINE: &str = "baseline";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "RMSE")]
    Rmse,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Mae, Metric::Rmse];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Rmse => "RMSE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub month: YearMonth,
    pub target: Target,
    pub metric: Metric,
    pub model: String,
    pub value: Option<f64>,
}

/// Settings a reader needs to interpret the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub months: Vec<YearMonth>,
    pub phi1: f64,
    pub phi2: f64,
    pub alpha: f64,
    pub linear_direction: LinearDirection,
    pub normalize: bool,
    pub humidity_clamp: bool,
    pub recursive_training: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub meta: ReportMeta,
    /// Column order: baseline first, then variants.
    pub models: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub skipped: Vec<(YearMonth, String)>,
    pub failures: Vec<VariantFailure>,
    pub paired: Vec<PairedSummary>,
    pub audit: LookAheadAudit,
}

impl EvaluationReport {
    pub fn new(meta: ReportMeta, models: Vec<String>) -> Self {
        EvaluationReport {
            meta,
            models,
            rows: Vec::new(),
            skipped: Vec::new(),
            failures: Vec::new(),
            paired: Vec::new(),
            audit: LookAheadAudit::default(),
        }
    }

    /// Months that produced rows, ascending.
    pub fn months(&self) -> Vec<YearMonth> {
        let mut m: Vec<YearMonth> = self.rows.iter().map(|r| r.month).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn value(
        &self,
        month: YearMonth,
        target: Target,
        metric: Metric,
        model: &str,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.month == month && r.target == target && r.metric == metric && r.model == model
            })
            .and_then(|r| r.value)
    }

    /// Arithmetic mean over the months with a value.
    pub fn average(&self, target: Target, metric: Metric, model: &str) -> Option<f64> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.target == target && r.metric == metric && r.model == model)
            .filter_map(|r| r.value)
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    pub fn paired(&self, month: YearMonth, target: Target, model: &str) -> Option<&PairedSummary> {
        self.paired
            .iter()
            .find(|p| p.month == month && p.target == target && p.model == model)
    }

    /// `month,target,metric,model,value`, month rows then `Average` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month", "target", "metric", "model", "value"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.month.to_string(),
                r.target.as_str().to_string(),
                r.metric.as_str().to_string(),
                r.model.clone(),
                fmt(r.value),
            ])?;
        }
        for target in Target::ALL {
            for metric in Metric::ALL {
                for model in &self.models {
                    w.write_record([
                        "Average".to_string(),
                        target.as_str().to_string(),
                        metric.as_str().to_string(),
                        model.clone(),
                        fmt(self.average(target, metric, model)),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("report.csv", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    /// Four tables (target × metric), one row per month plus `Average`.
    pub fn to_markdown(&self) -> String {
        let m = &self.meta;
        let mut s = String::new();
        let _ = writeln!(s, "# Ocean prediction errors\n");
        let _ = writeln!(
            s,
            "phi1 = {}, phi2 = {}, alpha = {}, linear weights = {}, normalized = {}, humidity clamped to [0, 100] = {}, recursive training = {}\n",
            m.phi1,
            m.phi2,
            m.alpha,
            match m.linear_direction {
                LinearDirection::RecentHeavy => "recent-heavy",
                LinearDirection::OldestHeavy => "oldest-heavy",
            },
            m.normalize,
            m.humidity_clamp,
            m.recursive_training
        );
        for (month, reason) in &self.skipped {
            let _ = writeln!(s, "Skipped {month}: {reason}\n");
        }
        for target in Target::ALL {
            for metric in Metric::ALL {
                let unit = match target {
                    Target::Temperature => "°C",
                    Target::Humidity => "%",
                };
                let _ = writeln!(s, "## {} {} ({unit})\n", target.as_str(), metric.as_str());
                let _ = writeln!(s, "| YYYYMM | {} |", self.models.join(" | "));
                let _ = writeln!(s, "|---|{}", "---:|".repeat(self.models.len()));
                let cell =
                    |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "".into());
                for month in self.months() {
                    let cells: Vec<String> = self
                        .models
                        .iter()
                        .map(|model| cell(self.value(month, target, metric, model)))
                        .collect();
                    let _ = writeln!(s, "| {month} | {} |", cells.join(" | "));
                }
                let avg: Vec<String> = self
                    .models
                    .iter()
                    .map(|model| cell(self.average(target, metric, model)))
                    .collect();
                let _ = writeln!(s, "| Average | {} |\n", avg.join(" | "));
            }
        }
        s
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// File name of a per-point error dump; `/` in labels becomes `-`.
pub fn error_dump_name(month: YearMonth, model: &str) -> String {
    format!("errors_{month}_{}.csv", model.replace('/', "-"))
}

pub fn write_error_dump<W: Write>(points: &[PointError], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io("error dump", e))?;
    Ok(())
}

pub fn read_error_dump<R: Read>(reader: R) -> Result<Vec<PointError>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Bin width used for error histograms.
pub fn histogram_bin_width(target: Target) -> f64 {
    match target {
        Target::Temperature => 0.25,
        Target::Humidity => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub target: Target,
    pub model: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Counts signed errors per (target, model) into fixed-width bins.
pub fn histogram<'a>(
    points: impl IntoIterator<Item = (&'a str, &'a PointError)>,
) -> Vec<HistogramBin> {
    let mut counts: BTreeMap<(Target, String, i64), usize> = BTreeMap::new();
    for (model, p) in points {
        let width = histogram_bin_width(p.target);
        let bin = (p.error / width).floor() as i64;
        *counts
            .entry((p.target, model.to_string(), bin))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|((target, model, bin), count)| {
            let width = histogram_bin_width(target);
            HistogramBin {
                target,
                model,
                bin_lo: bin as f64 * width,
                bin_hi: (bin + 1) as f64 * width,
                count,
            }
        })
        .collect()
}

pub fn write_histogram<W: Write>(bins: &[HistogramBin], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in bins {
        w.serialize(b)?;
    }
    w.flush().map_err(|e| Error::io("histogram", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::at;

    fn meta() -> ReportMeta {
        ReportMeta {
            months: vec![],
            phi1: 1.0,
            phi2: 80.0,
            alpha: 0.9,
            linear_direction: LinearDirection::RecentHeavy,
            normalize: true,
            humidity_clamp: true,
            recursive_training: "sequential_rollout".into(),
        }
    }

    fn report() -> EvaluationReport {
        let mut r = EvaluationReport::new(meta(), vec![BASELINE.into(), "exp/global".into()]);
        for (month, v) in [("202201", 1.0), ("202202", 2.0), ("202203", 4.5)] {
            for (model, scale) in [(BASELINE, 1.0), ("exp/global", 0.5)] {
                r.rows.push(ReportRow {
                    month: month.parse().unwrap(),
                    target: Target::Temperature,
                    metric: Metric::Mae,
                    model: model.into(),
                    value: Some(v * scale),
                });
            }
        }
        r
    }

    #[test]
    fn average_is_mean_of_months() {
        let r = report();
        assert!(
            (r.average(Target::Temperature, Metric::Mae, BASELINE)
                .unwrap()
                - 2.5)
                .abs()
                < 1e-12
        );
        assert_eq!(r.average(Target::Humidity, Metric::Mae, BASELINE), None);
    }

    #[test]
    fn csv_layout() {
        let text = report().to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("month,target,metric,model,value"));
        assert_eq!(lines.next(), Some("202201,temperature,MAE,baseline,1"));
        assert!(text.contains("Average,temperature,MAE,exp/global,1.25"));
        assert!(text.contains("Average,humidity,RMSE,baseline,\n"));
    }

    #[test]
    fn markdown_has_four_tables() {
        let md = report().to_markdown();
        assert_eq!(md.matches("| YYYYMM | baseline | exp/global |").count(), 4);
        assert!(md.contains("| 202203 | 4.500 | 2.250 |"));
        assert!(md.contains("| Average | 2.500 | 1.250 |"));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let r = report();
        r.save_json(&path).unwrap();
        assert_eq!(EvaluationReport::load_json(&path).unwrap(), r);
    }

    #[test]
    fn dumps_and_histogram() {
        let points: Vec<PointError> = [0.1, 0.2, -0.1, 0.3]
            .iter()
            .map(|&e| PointError {
                shipment_id: "s".into(),
                leg_id: "l".into(),
                timestamp: at(0),
                target: Target::Temperature,
                truth: 1.0,
                prediction: 1.0 + e,
                error: e,
            })
            .collect();
        let mut buf = Vec::new();
        write_error_dump(&points, &mut buf).unwrap();
        assert_eq!(read_error_dump(buf.as_slice()).unwrap(), points);
        let bins = histogram(points.iter().map(|p| ("baseline", p)));
        let counts: Vec<(f64, usize)> = bins.iter().map(|b| (b.bin_lo, b.count)).collect();
        assert_eq!(counts, vec![(-0.25, 1), (0.0, 2), (0.25, 1)]);
        assert_eq!(
            error_dump_name("202203".parse().unwrap(), "exp/global"),
            "errors_202203_exp-global.csv"
        );
    }
}
