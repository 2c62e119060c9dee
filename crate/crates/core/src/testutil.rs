//! Small fixtures shared by unit tests.

use chrono::{Duration, TimeZone, Utc};

use crate::telemetry::{EnvironmentTag, Leg, Measurement, Shipment, Timestamp};

pub fn at(minutes: i64) -> Timestamp {
    Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap() + Duration::minutes(minutes)
}

/// A tagged measurement with mild weather and the given internal truths.
pub fn point(
    leg: &str,
    minute: i64,
    tag: EnvironmentTag,
    internal_temp: f64,
    internal_rh: f64,
) -> Measurement {
    let k = minute as f64;
    Measurement {
        timestamp: at(minute),
        shipment_id: "s1".into(),
        leg_id: leg.into(),
        lat: 10.0,
        lon: 20.0,
        internal_temp,
        internal_rh,
        ext_temp: 15.0 + (k * 0.7).sin() * 4.0,
        ext_rh: 60.0 + (k * 0.3).cos() * 15.0,
        solar_radiation: 200.0 + (k * 1.1).sin() * 150.0,
        windspeed: 4.0 + (k * 0.5).cos() * 2.0,
        environment: Some(tag),
    }
}

/// Groups consecutive measurements by leg id into a shipment.
pub fn shipment(points: Vec<Measurement>) -> Shipment {
    let mut legs: Vec<Vec<Measurement>> = Vec::new();
    for p in points {
        match legs.last_mut() {
            Some(l) if l[0].leg_id == p.leg_id => l.push(p),
            _ => legs.push(vec![p]),
        }
    }
    let id = legs[0][0].shipment_id.clone();
    let legs = legs.into_iter().map(|l| Leg::new(l).unwrap()).collect();
    Shipment::new(id, legs)
}
