//! Frequency unit conversions.
//!
//! Internally every rate is angular (rad/us) and every time is in us. Config
//! files quote ordinary frequencies f = omega / 2pi in MHz.

use std::f64::consts::TAU;

/// Ordinary frequency in MHz to angular frequency in rad/us.
pub fn mhz_to_rad_per_us(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

/// Angular frequency in rad/us to ordinary frequency in MHz.
pub fn rad_per_us_to_mhz(omega: f64) -> f64 {
    omega / TAU
}

/// Energy-decay rate 1/T1 (rad/us compatible) from a lifetime in us.
pub fn rate_from_lifetime(t1_us: f64) -> f64 {
    1.0 / t1_us
}
