//! Broadcast ephemerides: RINEX navigation parsing, a selection store,
//! a fetch-and-cache client, and satellite position/velocity/clock
//! computation for GPS (Keplerian) and GLONASS (state-vector) records.

mod fetch;
mod glonass;
mod gps;
mod lzw;
mod rinex;
mod store;

pub use fetch::{
    cache_path, fetch_ephemeris, fetch_nav_file, nav_file_name, read_nav_file, remote_url,
    FetchConfig, FetchError, HttpTransport, NavKind, Transport, TransportError, ENV_BASE_URL,
    ENV_CACHE_DIR,
};
pub use glonass::{
    glonass_propagate, glonass_sat_state, GlonassEphemeris, GLONASS_MAX_AGE, GLONASS_STEP,
};
pub use gps::{gps_sat_state, gps_sat_state_with_max_age, kepler_solve, KeplerEphemeris, GPS_MAX_AGE};
pub use lzw::decompress_unix_z;
pub use rinex::{
    format_rinex_float, parse_rinex_nav, parse_rinex_nav_with_leap, write_rinex_nav, Diagnostic,
    IonoParams, NavData, NavRecord,
};
pub use store::EphemerisStore;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::EcefPosition;

/// Speed of light [m/s].
pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;
/// Earth gravitational constant for GPS broadcast ephemerides [m^3/s^2].
pub const GPS_MU: f64 = 3.986005e14;
/// Earth rotation rate [rad/s].
pub const OMEGA_EARTH: f64 = 7.2921151467e-5;
/// Relativistic clock correction constant, -2 sqrt(mu) / c^2 [s/sqrt(m)].
pub const RELATIVISTIC_F: f64 = -4.442807633e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constellation {
    Gps,
    Glonass,
}

impl Constellation {
    pub fn code(&self) -> char {
        match self {
            Constellation::Gps => 'G',
            Constellation::Glonass => 'R',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'G' => Some(Constellation::Gps),
            'R' => Some(Constellation::Glonass),
            _ => None,
        }
    }
}

/// Satellite identity. `freq_channel` is the GLONASS FDMA channel and 0 for GPS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SatId {
    pub constellation: Constellation,
    pub prn: u8,
    pub freq_channel: i8,
}

impl SatId {
    pub fn gps(prn: u8) -> Result<Self, EphemerisError> {
        if !(1..=32).contains(&prn) {
            return Err(EphemerisError::InvalidSatId(format!("G{prn:02}")));
        }
        Ok(Self {
            constellation: Constellation::Gps,
            prn,
            freq_channel: 0,
        })
    }

    pub fn glonass(slot: u8, freq_channel: i8) -> Result<Self, EphemerisError> {
        if !(1..=24).contains(&slot) || !(-7..=6).contains(&freq_channel) {
            return Err(EphemerisError::InvalidSatId(format!("R{slot:02}/{freq_channel}")));
        }
        Ok(Self {
            constellation: Constellation::Glonass,
            prn: slot,
            freq_channel,
        })
    }

    pub fn is_glonass(&self) -> bool {
        self.constellation == Constellation::Glonass
    }

    /// L1 carrier wavelength [m].
    pub fn l1_wavelength(&self) -> f64 {
        match self.constellation {
            Constellation::Gps => SPEED_OF_LIGHT / 1575.42e6,
            Constellation::Glonass => {
                SPEED_OF_LIGHT / (1602e6 + self.freq_channel as f64 * 562.5e3)
            }
        }
    }
}

impl std::fmt::Display for SatId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{:02}", self.constellation.code(), self.prn)
    }
}

/// Satellite position, velocity and clock at one instant, in ECEF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SatState {
    pub position: EcefPosition,
    pub velocity: Vector3<f64>,
    /// Satellite clock offset from system time [s].
    pub clock_bias: f64,
    /// [s/s]
    pub clock_drift: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EphemerisError {
    #[error("ephemeris is stale: {age_s:.1} s from reference epoch (limit {limit_s} s)")]
    StaleEphemeris { age_s: f64, limit_s: f64 },
    #[error("Kepler equation did not converge (M = {mean_anomaly}, e = {eccentricity})")]
    NoConvergence {
        mean_anomaly: f64,
        eccentricity: f64,
    },
    #[error("no ephemeris for {0}")]
    NoEphemeris(SatId),
    #[error("invalid satellite id {0}")]
    InvalidSatId(String),
    #[error("unsupported RINEX version or file type: {0}")]
    UnsupportedVersion(String),
    #[error("RINEX header missing or incomplete")]
    HeaderMissing,
}
