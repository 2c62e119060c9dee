//! Expanding-window splits keyed by test month.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::telemetry::{Leg, SegmentKind, Shipment, Timestamp};

/// A calendar month written `YYYYMM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidConfig(format!("month {month} out of range")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(t: &Timestamp) -> Self {
        YearMonth {
            year: t.year(),
            month: t.month(),
        }
    }

    /// Midnight UTC on the first day of the month.
    pub fn start(self) -> Timestamp {
        Utc.with_ymd_and_hms(self.year, self.month, 1, 0, 0, 0)
            .single()
            .expect("valid month start")
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            YearMonth {
                year: self.year + 1,
                month: 1,
            }
        } else {
            YearMonth {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Exclusive end of the month.
    pub fn end(self) -> Timestamp {
        self.next().start()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("`{s}` is not a YYYYMM month"));
        if s.len() != 6 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let year = s[..4].parse().map_err(|_| bad())?;
        let month = s[4..].parse().map_err(|_| bad())?;
        YearMonth::new(year, month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Str(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(v) => v.to_string(),
            Raw::Str(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LegKey {
    pub shipment_id: String,
    pub leg_id: String,
}

impl LegKey {
    pub fn of(leg: &Leg) -> Self {
        LegKey {
            shipment_id: leg.shipment_id.clone(),
            leg_id: leg.leg_id.clone(),
        }
    }
}

/// One expanding-window split.
///
/// Legs that ended before `cutoff` train. Every other leg that started
/// before `month_end` is a test leg; its measurements before `month_end`
/// are test measurements, and only the ocean ones are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_month: YearMonth,
    pub cutoff: Timestamp,
    pub month_end: Timestamp,
    pub train_legs: BTreeSet<LegKey>,
    pub test_legs: BTreeSet<LegKey>,
    pub train_rows: usize,
    pub ocean_test_rows: usize,
    /// Set when the split cannot be evaluated.
    pub skipped: Option<String>,
}

impl SplitSpec {
    pub fn is_train(&self, leg: &Leg) -> bool {
        self.train_legs.contains(&LegKey::of(leg))
    }

    pub fn is_test(&self, leg: &Leg) -> bool {
        self.test_legs.contains(&LegKey::of(leg))
    }

    /// Training shipments: only their completed legs.
    pub fn train_set(&self, dataset: &[Shipment]) -> Vec<Shipment> {
        dataset
            .iter()
            .filter_map(|s| s.filter_legs(|l| self.is_train(l)))
            .collect()
    }

    /// Shipments holding test legs, truncated at `month_end`, with all
    /// earlier legs kept so the residual history is complete.
    pub fn history_set(&self, dataset: &[Shipment]) -> Vec<Shipment> {
        dataset
            .iter()
            .filter(|s| s.legs.iter().any(|l| self.is_test(l)))
            .filter_map(|s| truncate(s, self.month_end))
            .collect()
    }
}

fn truncate(s: &Shipment, end: Timestamp) -> Option<Shipment> {
    let legs: Vec<Leg> = s
        .legs
        .iter()
        .filter_map(|l| {
            let kept: Vec<_> = l
                .measurements
                .iter()
                .filter(|m| m.timestamp < end)
                .cloned()
                .collect();
            if kept.len() == l.measurements.len() {
                Some(l.clone())
            } else if kept.is_empty() {
                None
            } else {
                Leg::new(kept).ok()
            }
        })
        .collect();
    if legs.is_empty() {
        None
    } else {
        Some(Shipment::new(s.shipment_id.clone(), legs))
    }
}

/// Builds one split per month. Months must be strictly ascending.
pub fn make_splits(dataset: &[Shipment], months: &[YearMonth]) -> Result<Vec<SplitSpec>> {
    if months.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(
            "months must be strictly ascending".into(),
        ));
    }
    let mut out = Vec::with_capacity(months.len());
    for &month in months {
        let cutoff = month.start();
        let month_end = month.end();
        let mut spec = SplitSpec {
            test_month: month,
            cutoff,
            month_end,
            train_legs: BTreeSet::new(),
            test_legs: BTreeSet::new(),
            train_rows: 0,
            ocean_test_rows: 0,
            skipped: None,
        };
        for s in dataset {
            for leg in &s.legs {
                if leg.end < cutoff {
                    spec.train_legs.insert(LegKey::of(leg));
                    spec.train_rows += leg.measurements.len();
                } else if leg.start < month_end {
                    spec.test_legs.insert(LegKey::of(leg));
                    spec.ocean_test_rows += leg
                        .measurements
                        .iter()
                        .filter(|m| m.timestamp < month_end && m.kind() == Some(SegmentKind::Ocean))
                        .count();
                }
            }
        }
        if spec.train_rows == 0 {
            spec.skipped = Some("empty training set".into());
        } else if spec.ocean_test_rows == 0 {
            spec.skipped = Some("no ocean test measurements".into());
        }
        if let Some(reason) = &spec.skipped {
            log::warn!("split {month} skipped: {reason}");
        }
        out.push(spec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::EnvironmentTag::{Ocean, Roads};
    use crate::telemetry::Measurement;
    use crate::testutil::{point, shipment};

    fn day(m: u32, d: u32) -> Timestamp {
        Utc.with_ymd_and_hms(2022, m, d, 12, 0, 0).unwrap()
    }

    fn at_time(mut p: Measurement, t: Timestamp) -> Measurement {
        p.timestamp = t;
        p
    }

    fn dataset() -> Vec<Shipment> {
        vec![shipment(vec![
            at_time(point("early", 0, Roads, 1.0, 50.0), day(11, 10)),
            at_time(point("early", 0, Roads, 1.0, 50.0), day(11, 15)),
            at_time(point("span", 0, Ocean, 1.0, 50.0), day(11, 28)),
            at_time(point("span", 0, Ocean, 1.0, 50.0), day(12, 3)),
        ])]
    }

    #[test]
    fn parses_months() {
        let m: YearMonth = "202212".parse().unwrap();
        assert_eq!(
            m.start(),
            Utc.with_ymd_and_hms(2022, 12, 1, 0, 0, 0).unwrap()
        );
        assert_eq!(m.end(), Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap());
        assert_eq!(m.to_string(), "202212");
        assert!("2022-12".parse::<YearMonth>().is_err());
        assert!("202213".parse::<YearMonth>().is_err());
    }

    #[test]
    fn completed_leg_trains_straddling_leg_tests() {
        let data = dataset();
        let splits = make_splits(&data, &["202212".parse().unwrap()]).unwrap();
        let s = &splits[0];
        assert!(s.is_train(&data[0].legs[0]));
        assert!(!s.is_train(&data[0].legs[1]));
        assert!(s.is_test(&data[0].legs[1]));
        assert_eq!(s.ocean_test_rows, 2);
        assert!(s.skipped.is_none());
    }

    #[test]
    fn train_sets_grow_with_cutoff() {
        let data = dataset();
        let months: Vec<YearMonth> = ["202211", "202212", "202301"]
            .iter()
            .map(|m| m.parse().unwrap())
            .collect();
        let splits = make_splits(&data, &months).unwrap();
        for w in splits.windows(2) {
            assert!(w[0].train_legs.is_subset(&w[1].train_legs));
        }
        for s in &splits {
            assert!(s.train_legs.is_disjoint(&s.test_legs));
        }
        assert!(splits[0].skipped.is_some());
    }

    #[test]
    fn descending_months_rejected() {
        let months = ["202212".parse().unwrap(), "202211".parse().unwrap()];
        assert!(make_splits(&dataset(), &months).is_err());
    }

    #[test]
    fn history_is_truncated_at_month_end() {
        let data = dataset();
        let split = &make_splits(&data, &["202211".parse().unwrap()]).unwrap()[0];
        let h = split.history_set(&data);
        assert_eq!(h[0].len(), 3);
        assert!(h[0].measurements().all(|m| m.timestamp < split.month_end));
    }
}
