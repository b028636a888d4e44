//! Raw observation ingestion and per-measurement corrections: satellite
//! clock, signal flight time with earth rotation, ionosphere, troposphere,
//! and weighting.

mod corrections;
mod process;
mod raw;

pub use corrections::{
    klobuchar_delay, klobuchar_obliquity, look_angles, saastamoinen_delay, saastamoinen_zenith,
    weight_of,
};
pub use process::{
    apply_receiver_corrections, earth_rotation, prepare_epoch, prepare_measurement,
    solve_transmit_time, MeasurementConfig, ProcessedMeasurement, TransmitSolution,
};
pub use raw::{parse_raw_records, write_raw_records, Epoch, RawGnssRecord, RawLog, RAW_HEADER};

pub use crate::ephemeris::IonoParams;

use thiserror::Error;

use crate::ephemeris::{EphemerisError, SatId};
use crate::frames::GnssTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: epoch {epoch} precedes {previous}")]
    OutOfOrder {
        line: usize,
        epoch: GnssTime,
        previous: GnssTime,
    },
    #[error("raw observation header line missing")]
    HeaderMissing,
    #[error("no ephemeris for {0}")]
    NoEphemeris(SatId),
    #[error("signal flight time did not converge for {0}")]
    NoConvergence(SatId),
    #[error("{sat}: {source}")]
    Ephemeris { sat: SatId, source: EphemerisError },
    #[error("{0}: no pseudorange")]
    MissingPseudorange(SatId),
    #[error("{0}: neither pr_std nor C/N0 available for weighting")]
    NoWeight(SatId),
    #[error("{sat}: C/N0 {cn0} dB-Hz below floor")]
    WeakSignal { sat: SatId, cn0: f64 },
    #[error("{sat}: elevation {elevation_deg:.2} deg below mask")]
    BelowElevationMask { sat: SatId, elevation_deg: f64 },
}

impl MeasurementError {
    fn from_ephemeris(sat: SatId, e: EphemerisError) -> Self {
        match e {
            EphemerisError::NoEphemeris(s) => MeasurementError::NoEphemeris(s),
            other => MeasurementError::Ephemeris { sat, source: other },
        }
    }
}
