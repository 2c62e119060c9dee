//! Shipment and measurement types, plus ingestion of telemetry files.
//!
//! The canonical on-disk format is a headered CSV with the columns listed in
//! [`CANONICAL_COLUMNS`]; JSONL with one measurement object per line is also
//! accepted. Rows that fail validation are collected into a rejects report
//! together with a reason code instead of being dropped.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, SubsecRound, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::psychro;

/// Source line number and raw fields of an ingested row.
type RawRow = (usize, Vec<String>);

pub type Timestamp = DateTime<Utc>;

/// Column order of the canonical CSV format.
pub const CANONICAL_COLUMNS: [&str; 13] = [
    "timestamp",
    "shipment_id",
    "leg_id",
    "row_type",
    "lat",
    "lon",
    "internal_temp",
    "internal_rh",
    "ext_temp",
    "ext_rh",
    "solar_radiation",
    "windspeed",
    "environment",
];

/// Environment around a GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentTag {
    Roads,
    Railways,
    Urban,
    Nature,
    Port,
    WaterBodies,
    Ocean,
}

impl EnvironmentTag {
    pub const ALL: [EnvironmentTag; 7] = [
        EnvironmentTag::Ocean,
        EnvironmentTag::WaterBodies,
        EnvironmentTag::Port,
        EnvironmentTag::Railways,
        EnvironmentTag::Roads,
        EnvironmentTag::Urban,
        EnvironmentTag::Nature,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvironmentTag::Roads => "roads",
            EnvironmentTag::Railways => "railways",
            EnvironmentTag::Urban => "urban",
            EnvironmentTag::Nature => "nature",
            EnvironmentTag::Port => "port",
            EnvironmentTag::WaterBodies => "water_bodies",
            EnvironmentTag::Ocean => "ocean",
        }
    }

    /// Only the open ocean counts as delayed (satellite) data.
    pub fn kind(self) -> SegmentKind {
        match self {
            EnvironmentTag::Ocean => SegmentKind::Ocean,
            _ => SegmentKind::Land,
        }
    }

    /// Tie-break rank; lower wins.
    /// Order: ocean > water_bodies > port > railways > roads > urban > nature.
    pub fn priority(self) -> u8 {
        match self {
            EnvironmentTag::Ocean => 0,
            EnvironmentTag::WaterBodies => 1,
            EnvironmentTag::Port => 2,
            EnvironmentTag::Railways => 3,
            EnvironmentTag::Roads => 4,
            EnvironmentTag::Urban => 5,
            EnvironmentTag::Nature => 6,
        }
    }
}

impl fmt::Display for EnvironmentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvironmentTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvironmentTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown environment tag `{s}`"))
    }
}

/// Land segments carry live data, ocean segments delayed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Land,
    Ocean,
}

/// One timed sensor and weather record on a shipment leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub timestamp: Timestamp,
    pub shipment_id: String,
    pub leg_id: String,
    pub lat: f64,
    pub lon: f64,
    pub internal_temp: f64,
    pub internal_rh: f64,
    pub ext_temp: f64,
    pub ext_rh: f64,
    pub solar_radiation: f64,
    pub windspeed: f64,
    pub environment: Option<EnvironmentTag>,
}

impl Measurement {
    pub fn kind(&self) -> Option<SegmentKind> {
        self.environment.map(EnvironmentTag::kind)
    }

    /// Checks the physical-range invariants, returning the first violation.
    pub fn validate(&self) -> std::result::Result<(), RejectReason> {
        let finite = [
            ("lat", self.lat),
            ("lon", self.lon),
            ("internal_temp", self.internal_temp),
            ("internal_rh", self.internal_rh),
            ("ext_temp", self.ext_temp),
            ("ext_rh", self.ext_rh),
            ("solar_radiation", self.solar_radiation),
            ("windspeed", self.windspeed),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(RejectReason::NonFinite(name));
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(RejectReason::LatOutOfRange);
        }
        if !(self.lon > -180.0 && self.lon <= 180.0) {
            return Err(RejectReason::LonOutOfRange);
        }
        if !(0.0..=100.0).contains(&self.internal_rh) || !(0.0..=100.0).contains(&self.ext_rh) {
            return Err(RejectReason::RhOutOfRange);
        }
        if !psychro::in_temperature_domain(self.ext_temp) {
            return Err(RejectReason::TempOutOfRange);
        }
        if self.solar_radiation < 0.0 {
            return Err(RejectReason::NegativeSolarRadiation);
        }
        if self.windspeed < 0.0 {
            return Err(RejectReason::NegativeWindspeed);
        }
        Ok(())
    }
}

/// A stretch of a shipment under a single mode of transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub leg_id: String,
    pub shipment_id: String,
    pub measurements: Vec<Measurement>,
    pub start: Timestamp,
    pub end: Timestamp,
    pub init_temp: f64,
    pub init_rh: f64,
    pub init_dewpoint: f64,
}

impl Leg {
    /// Builds a leg from its measurements, sorting them by time.
    ///
    /// Measurements must be non-empty, share one leg id and carry distinct
    /// timestamps.
    pub fn new(mut measurements: Vec<Measurement>) -> Result<Self> {
        measurements.sort_by_key(|m| m.timestamp);
        let first = measurements.first().ok_or(Error::EmptyInput("leg"))?;
        let leg_id = first.leg_id.clone();
        let shipment_id = first.shipment_id.clone();
        if measurements
            .iter()
            .any(|m| m.leg_id != leg_id || m.shipment_id != shipment_id)
        {
            return Err(Error::SchemaMismatch(format!(
                "leg {leg_id} mixes measurements from different legs"
            )));
        }
        if measurements
            .windows(2)
            .any(|w| w[0].timestamp >= w[1].timestamp)
        {
            return Err(Error::SchemaMismatch(format!(
                "leg {leg_id} has repeated timestamps"
            )));
        }
        let init_temp = first.ext_temp;
        let init_rh = first.ext_rh;
        let init_dewpoint = psychro::dewpoint_floored(init_temp, init_rh)?;
        let start = first.timestamp;
        let end = measurements[measurements.len() - 1].timestamp;
        Ok(Leg {
            leg_id,
            shipment_id,
            measurements,
            start,
            end,
            init_temp,
            init_rh,
            init_dewpoint,
        })
    }
}

/// A maximal run of measurements of one kind within a shipment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_id: String,
    pub shipment_id: String,
    pub kind: SegmentKind,
    pub measurements: Vec<Measurement>,
}

/// A shipment: its legs in time order and, once tagged, its segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shipment {
    pub shipment_id: String,
    pub legs: Vec<Leg>,
    pub segments: Vec<Segment>,
}

/// A measurement together with the leg and segment it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct TimelinePoint<'a> {
    pub leg: &'a Leg,
    pub measurement: &'a Measurement,
    pub segment: &'a Segment,
}

impl Shipment {
    /// Assembles a shipment. Legs are sorted by start time; segments are
    /// derived when every measurement carries a tag and left empty otherwise.
    pub fn new(shipment_id: impl Into<String>, mut legs: Vec<Leg>) -> Self {
        legs.sort_by_key(|l| l.start);
        let mut shipment = Shipment {
            shipment_id: shipment_id.into(),
            legs,
            segments: Vec::new(),
        };
        if shipment.is_tagged() {
            shipment.segments = segment_shipment(&shipment).expect("tagged shipment segments");
        }
        shipment
    }

    pub fn measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.legs.iter().flat_map(|l| l.measurements.iter())
    }

    pub fn len(&self) -> usize {
        self.legs.iter().map(|l| l.measurements.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_tagged(&self) -> bool {
        self.measurements().all(|m| m.environment.is_some())
    }

    /// Walks the shipment in time order, pairing each measurement with its
    /// leg and segment. Empty when the shipment has not been segmented.
    pub fn timeline(&self) -> Vec<TimelinePoint<'_>> {
        if self.segments.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.len());
        let mut seg_idx = 0;
        let mut within = 0;
        for leg in &self.legs {
            for m in &leg.measurements {
                while within >= self.segments[seg_idx].measurements.len() {
                    seg_idx += 1;
                    within = 0;
                }
                out.push(TimelinePoint {
                    leg,
                    measurement: m,
                    segment: &self.segments[seg_idx],
                });
                within += 1;
            }
        }
        out
    }

    /// Keeps only the legs accepted by `keep`, re-deriving segments.
    pub fn filter_legs(&self, mut keep: impl FnMut(&Leg) -> bool) -> Option<Shipment> {
        let legs: Vec<Leg> = self.legs.iter().filter(|l| keep(l)).cloned().collect();
        if legs.is_empty() {
            None
        } else {
            Some(Shipment::new(self.shipment_id.clone(), legs))
        }
    }
}

/// Splits a tagged shipment into maximal runs of constant [`SegmentKind`].
pub fn segment_shipment(shipment: &Shipment) -> Result<Vec<Segment>> {
    let mut segments: Vec<Segment> = Vec::new();
    for m in shipment.measurements() {
        let kind = m.kind().ok_or_else(|| Error::Untagged {
            shipment_id: m.shipment_id.clone(),
            timestamp: m.timestamp,
        })?;
        match segments.last_mut() {
            Some(seg) if seg.kind == kind => seg.measurements.push(m.clone()),
            _ => segments.push(Segment {
                segment_id: format!("{}:{}", shipment.shipment_id, segments.len()),
                shipment_id: shipment.shipment_id.clone(),
                kind,
                measurements: vec![m.clone()],
            }),
        }
    }
    Ok(segments)
}

/// Why an input row was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Parse(&'static str),
    NonFinite(&'static str),
    LatOutOfRange,
    LonOutOfRange,
    RhOutOfRange,
    TempOutOfRange,
    NegativeSolarRadiation,
    NegativeWindspeed,
    UnknownRowType,
    UnknownEnvironment,
    DuplicateTimestamp,
    LegOverlap,
}

impl RejectReason {
    pub fn code(&self) -> String {
        match self {
            RejectReason::Parse(field) => format!("parse_error:{field}"),
            RejectReason::NonFinite(field) => format!("non_finite:{field}"),
            RejectReason::LatOutOfRange => "lat_out_of_range".into(),
            RejectReason::LonOutOfRange => "lon_out_of_range".into(),
            RejectReason::RhOutOfRange => "rh_out_of_range".into(),
            RejectReason::TempOutOfRange => "temp_out_of_range".into(),
            RejectReason::NegativeSolarRadiation => "negative_solar_radiation".into(),
            RejectReason::NegativeWindspeed => "negative_windspeed".into(),
            RejectReason::UnknownRowType => "unknown_row_type".into(),
            RejectReason::UnknownEnvironment => "unknown_environment".into(),
            RejectReason::DuplicateTimestamp => "duplicate_timestamp".into(),
            RejectReason::LegOverlap => "leg_overlap".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectedRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    pub fields: Vec<String>,
    pub reason: RejectReason,
}

/// Maps canonical field names onto the column names used by a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub timestamp: String,
    pub shipment_id: String,
    pub leg_id: String,
    pub row_type: String,
    pub lat: String,
    pub lon: String,
    pub internal_temp: String,
    pub internal_rh: String,
    pub ext_temp: String,
    pub ext_rh: String,
    pub solar_radiation: String,
    pub windspeed: String,
    pub environment: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        let c = CANONICAL_COLUMNS.map(String::from);
        let [timestamp, shipment_id, leg_id, row_type, lat, lon, internal_temp, internal_rh, ext_temp, ext_rh, solar_radiation, windspeed, environment] =
            c;
        ColumnMapping {
            timestamp,
            shipment_id,
            leg_id,
            row_type,
            lat,
            lon,
            internal_temp,
            internal_rh,
            ext_temp,
            ext_rh,
            solar_radiation,
            windspeed,
            environment,
        }
    }
}

impl ColumnMapping {
    /// Source names in canonical order; the last entry (environment) is optional.
    fn sources(&self) -> [&str; 13] {
        [
            &self.timestamp,
            &self.shipment_id,
            &self.leg_id,
            &self.row_type,
            &self.lat,
            &self.lon,
            &self.internal_temp,
            &self.internal_rh,
            &self.ext_temp,
            &self.ext_rh,
            &self.solar_radiation,
            &self.windspeed,
            &self.environment,
        ]
    }
}

/// Result of ingesting one file.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub shipments: Vec<Shipment>,
    /// Header of the source, used when writing the rejects report.
    pub header: Vec<String>,
    pub rejects: Vec<RejectedRow>,
    /// Depot/node rows skipped on purpose.
    pub nodes_dropped: usize,
}

impl IngestReport {
    pub fn measurement_count(&self) -> usize {
        self.shipments.iter().map(Shipment::len).sum()
    }
}

/// Ingests a telemetry file. `.jsonl`/`.ndjson` files are read as JSON lines,
/// anything else as CSV.
pub fn ingest(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => ingest_jsonl(BufReader::new(file), mapping),
        _ => ingest_csv(file, mapping),
    }
}

pub fn ingest_csv<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let index: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let sources = mapping.sources();
    let mut positions = [None; 13];
    for (i, name) in sources.iter().enumerate() {
        positions[i] = index.get(name).copied();
        if positions[i].is_none() && i < 12 {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let fields: Vec<String> = record.iter().map(String::from).collect();
        let cells: [Option<String>; 13] =
            std::array::from_fn(|i| positions[i].and_then(|p| fields.get(p).cloned()));
        rows.push((fields, cells));
    }
    Ok(assemble(header, rows))
}

pub fn ingest_jsonl<R: BufRead>(reader: R, mapping: &ColumnMapping) -> Result<IngestReport> {
    let sources = mapping.sources();
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("<jsonl line {}>", lineno + 1), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let object: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&line)?;
        let cells: [Option<String>; 13] = std::array::from_fn(|i| {
            object.get(sources[i]).and_then(|v| match v {
                serde_json::Value::Null => None,
                serde_json::Value::String(s) => Some(s.clone()),
                other => Some(other.to_string()),
            })
        });
        // Upstream loggers only emit leg rows.
        let mut cells = cells;
        if cells[3].is_none() {
            cells[3] = Some("leg".into());
        }
        if let Some(i) = (0..12).find(|&i| cells[i].is_none()) {
            if rows.is_empty() {
                return Err(Error::MissingColumn(sources[i].to_string()));
            }
        }
        rows.push((vec![line], cells));
    }
    Ok(assemble(vec!["line".into()], rows))
}

pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc).trunc_subsecs(0));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t).trunc_subsecs(0));
        }
    }
    s.parse::<i64>()
        .ok()
        .and_then(|secs| Utc.timestamp_opt(secs, 0).single())
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn parse_row(
    cells: &[Option<String>; 13],
) -> std::result::Result<Option<Measurement>, RejectReason> {
    let text = |i: usize| cells[i].as_deref().unwrap_or("").trim();
    let number = |i: usize| -> std::result::Result<f64, RejectReason> {
        text(i)
            .parse::<f64>()
            .map_err(|_| RejectReason::Parse(CANONICAL_COLUMNS[i]))
    };
    match text(3) {
        "leg" => {}
        "node" => return Ok(None),
        _ => return Err(RejectReason::UnknownRowType),
    }
    let timestamp = parse_timestamp(text(0)).ok_or(RejectReason::Parse("timestamp"))?;
    let shipment_id = text(1);
    let leg_id = text(2);
    if shipment_id.is_empty() {
        return Err(RejectReason::Parse("shipment_id"));
    }
    if leg_id.is_empty() {
        return Err(RejectReason::Parse("leg_id"));
    }
    let environment = match text(12) {
        "" => None,
        s => Some(s.parse().map_err(|_| RejectReason::UnknownEnvironment)?),
    };
    let m = Measurement {
        timestamp,
        shipment_id: shipment_id.to_string(),
        leg_id: leg_id.to_string(),
        lat: number(4)?,
        lon: number(5)?,
        internal_temp: number(6)?,
        internal_rh: number(7)?,
        ext_temp: number(8)?,
        ext_rh: number(9)?,
        solar_radiation: number(10)?,
        windspeed: number(11)?,
        environment,
    };
    m.validate()?;
    Ok(Some(m))
}

fn assemble(header: Vec<String>, rows: Vec<(Vec<String>, [Option<String>; 13])>) -> IngestReport {
    let mut report = IngestReport {
        header,
        ..Default::default()
    };
    let mut seen: HashSet<(String, Timestamp)> = HashSet::new();
    // shipment -> leg -> (row number, raw fields, measurement)
    type Accepted = (usize, Vec<String>, Measurement);
    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<Accepted>>> = BTreeMap::new();

    for (i, (fields, cells)) in rows.into_iter().enumerate() {
        let row = i + 1;
        match parse_row(&cells) {
            Ok(None) => report.nodes_dropped += 1,
            Ok(Some(m)) => {
                if !seen.insert((m.shipment_id.clone(), m.timestamp)) {
                    report.rejects.push(RejectedRow {
                        row,
                        fields,
                        reason: RejectReason::DuplicateTimestamp,
                    });
                    continue;
                }
                grouped
                    .entry(m.shipment_id.clone())
                    .or_default()
                    .entry(m.leg_id.clone())
                    .or_default()
                    .push((row, fields, m));
            }
            Err(reason) => report.rejects.push(RejectedRow {
                row,
                fields,
                reason,
            }),
        }
    }

    for (shipment_id, legs) in grouped {
        let mut built: Vec<(Leg, Vec<RawRow>)> = legs
            .into_values()
            .map(|rows| {
                let (raw, ms): (Vec<_>, Vec<_>) =
                    rows.into_iter().map(|(r, f, m)| ((r, f), m)).unzip();
                (Leg::new(ms).expect("validated leg rows"), raw)
            })
            .collect();
        built.sort_by_key(|(leg, _)| (leg.start, leg.leg_id.clone()));

        let mut kept: Vec<Leg> = Vec::with_capacity(built.len());
        for (leg, raw) in built {
            if kept.last().is_some_and(|prev| leg.start <= prev.end) {
                for (row, fields) in raw {
                    report.rejects.push(RejectedRow {
                        row,
                        fields,
                        reason: RejectReason::LegOverlap,
                    });
                }
                continue;
            }
            kept.push(leg);
        }
        report.shipments.push(Shipment::new(shipment_id, kept));
    }
    report.rejects.sort_by_key(|r| r.row);
    report
}

/// Writes shipments in canonical CSV form (leg rows only, time-ordered).
pub fn write_csv<W: Write>(shipments: &[Shipment], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_COLUMNS)?;
    for m in shipments.iter().flat_map(Shipment::measurements) {
        w.write_record(measurement_record(m, "leg"))?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

pub(crate) fn measurement_record(m: &Measurement, row_type: &str) -> [String; 13] {
    [
        format_timestamp(&m.timestamp),
        m.shipment_id.clone(),
        m.leg_id.clone(),
        row_type.to_string(),
        m.lat.to_string(),
        m.lon.to_string(),
        m.internal_temp.to_string(),
        m.internal_rh.to_string(),
        m.ext_temp.to_string(),
        m.ext_rh.to_string(),
        m.solar_radiation.to_string(),
        m.windspeed.to_string(),
        m.environment
            .map(|e| e.as_str().to_string())
            .unwrap_or_default(),
    ]
}

/// Writes the rejects report: the source header plus a `reject_reason` column.
pub fn write_rejects<W: Write>(report: &IngestReport, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let mut header = report.header.clone();
    header.push("reject_reason".into());
    w.write_record(&header)?;
    for r in &report.rejects {
        let mut fields = r.fields.clone();
        fields.push(r.reason.code());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io("<rejects output>", e))?;
    Ok(())
}
