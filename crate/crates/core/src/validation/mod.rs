//! Accuracy assessment: grid altitude statistics over repeated drives,
//! DOP-based horizontal error estimates, and orientation error estimated
//! from reprojection residuals.

mod camera;
pub(crate) mod features;
mod grid;
mod horizontal;
mod orientation;

pub use camera::{
    camera_point, orientation_jacobian, project, reprojection_residuals, translation_jacobian, Intrinsics,
    CAMERA_FROM_LOCAL,
};
pub use features::{read_feature_file, write_feature_file, Feature2D3D};
pub use grid::{
    centroid_origin, compare_solutions, grid_altitude_report, grid_altitude_report_in, CellStats, Comparison, DriveFix, GridReport,
    GridSpec, HistogramBin, OverlayBin, Percentiles, HISTOGRAM_BIN_M,
};
pub use horizontal::{horizontal_error_estimate, HorizontalEstimate};
pub use orientation::{
    frame_orientation_error, group_by_frame, orientation_rmse, solve_stacked, FrameEstimate, FrameFeatures,
    OrientationErrorEstimate,
};

use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("no grid cell has enough passes from enough drives")]
    NoQualifiedCells,
    #[error("reports were built with different grid specs: {0}")]
    SpecMismatch(String),
    #[error("fix {index} has no DOP")]
    MissingDop { index: usize },
    #[error("feature {feature} is behind the camera (depth {depth:.3} m)")]
    BehindCamera { feature: u64, depth: f64 },
    #[error("frame {frame}: {usable} usable features, need at least 2")]
    Underdetermined { frame: usize, usable: usize },
    #[error("frame {frame}: stacked Jacobian has rank {rank}, need 3")]
    RankDeficient { frame: usize, rank: usize },
    #[error("feature references frame {frame}, but only {frames} poses were given")]
    UnknownFrame { frame: usize, frames: usize },
    #[error("no frame produced an orientation estimate")]
    NoUsableFrames,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
