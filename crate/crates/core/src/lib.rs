//! Raw GNSS processing toolkit.
//!
//! The pipeline runs broadcast ephemerides ([`ephemeris`]) and raw receiver
//! observables ([`measurements`]) through weighted least squares or a tightly
//! coupled Kalman filter ([`solver`]). [`validation`] holds the accuracy
//! assessment tools (grid altitude statistics, DOP-based horizontal bounds,
//! reprojection-Jacobian orientation error) and [`refine`] the multi-drive
//! map-based pose correction. [`testkit`] generates synthetic scenes and
//! carries the independent oracles used by the test suites.

pub mod ephemeris;
pub mod frames;
pub mod io;
pub mod measurements;
pub mod refine;
pub mod solver;
pub mod testkit;
pub mod validation;

pub use frames::{EcefPosition, GeodeticPosition, GlobalPose, GnssTime, Quaternion};
