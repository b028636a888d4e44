//! Atmospheric delay models, look angles, and measurement weighting.

use std::f64::consts::PI;

use crate::ephemeris::{IonoParams, SPEED_OF_LIGHT};
use crate::frames::{ned_matrix, EcefPosition, GeodeticPosition, GnssTime};

/// Azimuth (from north, clockwise) and elevation [rad] of `sat` seen from `rx`.
pub fn look_angles(rx: &GeodeticPosition, rx_ecef: &EcefPosition, sat: &EcefPosition) -> (f64, f64) {
    let ned = ned_matrix(rx) * (sat.0 - rx_ecef.0);
    let el = (-ned.z / ned.norm()).asin();
    let az = ned.y.atan2(ned.x).rem_euclid(2.0 * PI);
    (az, el)
}

/// Klobuchar broadcast model: L1 ionospheric delay [m].
pub fn klobuchar_delay(
    iono: &IonoParams,
    rx: &GeodeticPosition,
    az: f64,
    el: f64,
    t: &GnssTime,
) -> f64 {
    // the model works in semicircles
    let e = el / PI;
    let phi_u = rx.lat_deg / 180.0;
    let lam_u = rx.lon_deg / 180.0;
    let psi = 0.0137 / (e + 0.11) - 0.022;
    let phi_i = (phi_u + psi * az.cos()).clamp(-0.416, 0.416);
    let lam_i = lam_u + psi * az.sin() / (phi_i * PI).cos();
    let phi_m = phi_i + 0.064 * ((lam_i - 1.617) * PI).cos();
    let local = (4.32e4 * lam_i + t.tow()).rem_euclid(86400.0);
    let slant = 1.0 + 16.0 * (0.53 - e).powi(3);

    let poly = |c: &[f64; 4]| c[0] + phi_m * (c[1] + phi_m * (c[2] + phi_m * c[3]));
    let amp = poly(&iono.alpha).max(0.0);
    let per = poly(&iono.beta).max(72000.0);
    let x = 2.0 * PI * (local - 50400.0) / per;
    let delay = if x.abs() < 1.57 {
        slant * (5e-9 + amp * (1.0 - x * x / 2.0 + x.powi(4) / 24.0))
    } else {
        slant * 5e-9
    };
    SPEED_OF_LIGHT * delay
}

/// Klobuchar slant factor at elevation `el` [rad].
pub fn klobuchar_obliquity(el: f64) -> f64 {
    1.0 + 16.0 * (0.53 - el / PI).powi(3)
}

const REL_HUMIDITY: f64 = 0.7;

/// Saastamoinen zenith delay under a standard atmosphere at the receiver
/// height [m], hydrostatic plus wet.
pub fn saastamoinen_zenith(rx: &GeodeticPosition) -> f64 {
    let h = rx.height.clamp(0.0, 1e4);
    let pressure = 1013.25 * (1.0 - 2.2557e-5 * h).powf(5.2568);
    let temp = 15.0 - 6.5e-3 * h + 273.16;
    let vapor = 6.108 * REL_HUMIDITY * ((17.15 * temp - 4684.0) / (temp - 38.45)).exp();
    let lat = rx.lat_deg.to_radians();
    let dry = 0.0022768 * pressure / (1.0 - 0.00266 * (2.0 * lat).cos() - 0.00028 * h / 1e3);
    let wet = 0.002277 * (1255.0 / temp + 0.05) * vapor;
    dry + wet
}

/// Slant tropospheric delay [m]: zenith delay mapped by `1 / sin(el)`.
pub fn saastamoinen_delay(rx: &GeodeticPosition, el: f64) -> f64 {
    saastamoinen_zenith(rx) / el.sin()
}

/// Pseudorange weight [1/m^2].
///
/// A reported sigma wins. Otherwise `sigma = sigma0 * 10^(-(cn0 - 45)/20) / sin(el)`.
/// `None` when neither sigma nor C/N0 is available.
pub fn weight_of(pr_std: Option<f64>, cn0: Option<f64>, el: f64, sigma0: f64) -> Option<f64> {
    if let Some(s) = pr_std {
        return Some(1.0 / (s * s));
    }
    let cn0 = cn0?;
    let sigma = sigma0 * 10f64.powf(-(cn0 - 45.0) / 20.0) / el.sin();
    Some(1.0 / (sigma * sigma))
}
