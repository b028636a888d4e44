//! Position, velocity and time estimation: per-epoch weighted least squares
//! with DOP, and a tightly coupled Kalman filter over pseudoranges and
//! pseudorange rates.

mod dop;
mod fixes;
mod kf;
mod pipeline;
mod wls;

pub use dop::{dop_of, Dop};
pub use fixes::{read_fix_csv, write_fix_csv, Fix, SolveMode, FIX_HEADER};
pub use kf::{
    FilterConfig, FilterState, Innovation, KalmanFilter, ObservationKind, UpdateReport, STATE_DIM,
};
pub use pipeline::{solve_file, solve_log, RunReport, SolveConfig, SolveFileError, SolveOutput};
pub use wls::{geometry_matrix, velocity_solve, wls_solve, WlsConfig};

use nalgebra::{DMatrix, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::frames::{EcefPosition, GnssTime};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("{available} usable measurements, {required} required")]
    Underdetermined { available: usize, required: usize },
    #[error("singular geometry (condition number {condition:.3e})")]
    SingularGeometry { condition: f64 },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("cannot predict backwards from {from} to {to}")]
    TimeReversal { from: GnssTime, to: GnssTime },
    #[error("gap of {gap} s exceeds the filter limit")]
    GapTooLarge { gap: f64 },
    #[error("filter not initialized")]
    NotInitialized,
    #[error("input error: {0}")]
    Input(String),
}

/// Receiver solution for one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PvtSolution {
    pub time: GnssTime,
    pub position: EcefPosition,
    /// [m/s], zero when no rate solution was possible
    pub velocity: Vector3<f64>,
    pub velocity_valid: bool,
    /// Receiver clock offset times c [m].
    pub clock_bias: f64,
    /// [m/s]
    pub clock_drift: f64,
    /// GLONASS minus GPS receiver clock [m].
    pub glonass_bias: f64,
    /// Over (x, y, z, clock[, glonass_bias]) in m^2.
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
    pub dop: Dop,
    pub n_sats_used: usize,
    /// Post-fit pseudorange residuals in measurement order [m].
    pub residuals: Vec<f64>,
}
