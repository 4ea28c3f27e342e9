//! International Standard Atmosphere, troposphere plus the isothermal
//! lower stratosphere. Good to roughly 20 km, which covers every altitude
//! either vehicle reaches.

pub const GRAVITY: f64 = 9.80665;
pub const SEA_LEVEL_DENSITY: f64 = 1.225;

const SEA_LEVEL_TEMPERATURE: f64 = 288.15;
const LAPSE_RATE: f64 = 0.0065;
const TROPOPAUSE: f64 = 11_000.0;
const TROPOPAUSE_TEMPERATURE: f64 = 216.65;
const TROPOPAUSE_DENSITY: f64 = 0.363_918;
const STRATOSPHERE_SCALE_HEIGHT: f64 = 6_341.62;
const GAS_CONSTANT: f64 = 287.052_87;
const HEAT_CAPACITY_RATIO: f64 = 1.4;
// g / (R * L) - 1
const DENSITY_EXPONENT: f64 = 4.255_876;

/// Static air temperature in kelvin.
pub fn temperature(altitude: f64) -> f64 {
    if altitude < TROPOPAUSE {
        SEA_LEVEL_TEMPERATURE - LAPSE_RATE * altitude.max(-1_000.0)
    } else {
        TROPOPAUSE_TEMPERATURE
    }
}

/// Air density in kg/m³.
pub fn density(altitude: f64) -> f64 {
    if altitude < TROPOPAUSE {
        SEA_LEVEL_DENSITY * (temperature(altitude) / SEA_LEVEL_TEMPERATURE).powf(DENSITY_EXPONENT)
    } else {
        TROPOPAUSE_DENSITY * (-(altitude - TROPOPAUSE) / STRATOSPHERE_SCALE_HEIGHT).exp()
    }
}

/// Speed of sound in m/s.
pub fn speed_of_sound(altitude: f64) -> f64 {
    (HEAT_CAPACITY_RATIO * GAS_CONSTANT * temperature(altitude)).sqrt()
}
