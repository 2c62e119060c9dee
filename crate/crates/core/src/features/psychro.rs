//! Magnus-form psychrometrics over liquid water.

use crate::error::{Error, Result};

const MAGNUS_E0: f64 = 6.112;
const MAGNUS_A: f64 = 17.62;
const MAGNUS_B: f64 = 243.12;

/// Lowest relative humidity used when a dewpoint is needed for every row.
pub const RH_FLOOR: f64 = 0.1;

pub fn in_temperature_domain(temp: f64) -> bool {
    temp > -60.0 && temp < 80.0
}

/// Saturation vapor pressure in hPa for air temperature in °C.
pub fn saturation_vp(temp: f64) -> Result<f64> {
    if !in_temperature_domain(temp) {
        return Err(Error::Domain {
            quantity: "temperature",
            value: temp,
        });
    }
    Ok(MAGNUS_E0 * (MAGNUS_A * temp / (MAGNUS_B + temp)).exp())
}

/// Actual vapor pressure in hPa.
pub fn vapor_pressure(temp: f64, rh: f64) -> Result<f64> {
    Ok(rh / 100.0 * saturation_vp(temp)?)
}

/// Dewpoint in °C, inverting the Magnus formula. `rh` must lie in (0, 100].
pub fn dewpoint(temp: f64, rh: f64) -> Result<f64> {
    if !(rh > 0.0 && rh <= 100.0) {
        return Err(Error::Domain {
            quantity: "relative humidity",
            value: rh,
        });
    }
    if !in_temperature_domain(temp) {
        return Err(Error::Domain {
            quantity: "temperature",
            value: temp,
        });
    }
    let gamma = (rh / 100.0).ln() + MAGNUS_A * temp / (MAGNUS_B + temp);
    Ok(MAGNUS_B * gamma / (MAGNUS_A - gamma))
}

/// [`dewpoint`] with humidity raised to [`RH_FLOOR`], so bone-dry readings
/// still yield a finite value.
pub fn dewpoint_floored(temp: f64, rh: f64) -> Result<f64> {
    dewpoint(temp, rh.max(RH_FLOOR))
}

/// Relative humidity implied by holding the leg-start vapor pressure fixed
/// while the temperature moves to `est_temp`. Clamped to [0, 100].
pub fn psychro_rh(est_temp: f64, init_temp: f64, init_rh: f64) -> Result<f64> {
    let e = vapor_pressure(init_temp, init_rh)?;
    let rh = 100.0 * e / saturation_vp(est_temp)?;
    Ok(rh.clamp(0.0, 100.0))
}
