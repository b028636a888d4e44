//! Time scales, WGS84 geodesy and the pose conventions shared by every
//! other module.
//!
//! Orientation convention: a pose quaternion rotates ECEF vectors into the
//! local `[forward, right, down]` frame, so `q.to_rotation_matrix()` has the
//! local axes (expressed in ECEF) as its rows. Quaternions are stored and
//! serialized scalar-first `(w, x, y, z)`.

mod geodesy;
mod pose;
mod time;

pub use geodesy::{
    ecef_to_geodetic, geodetic_to_ecef, ned_matrix, ned_rotation_at, EcefPosition,
    GeodeticPosition, TangentPlane,
};
pub use pose::{
    pose_local_axes, quat_angle_between, quat_approx_eq, quat_from_wxyz, quat_to_wxyz, read_pose_csv,
    write_pose_csv, GlobalPose, Quaternion,
};
pub use time::{GnssTime, DEFAULT_LEAP_SECONDS, SECONDS_PER_WEEK};

use thiserror::Error;

/// WGS84 semi-major axis [m].
pub const WGS84_A: f64 = 6378137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257223563;
/// WGS84 semi-minor axis [m].
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// WGS84 first eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("position too close to the geocenter ({norm:.3} m)")]
    NearSingular { norm: f64 },
    #[error("invalid time: week {week}, tow {tow}")]
    InvalidTime { week: i64, tow: f64 },
    #[error("line {line}: {reason}")]
    PoseRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
