//! Orientation error of provided poses, estimated per frame from the
//! reprojection residuals of features with known world points.
//!
//! Each feature contributes two rows `J dtheta = -r` (residual linearized
//! in a small body rotation at `dtheta = 0`); the stacked system is solved
//! in the least-squares sense, so a frame needs at least two features.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{camera_point, orientation_jacobian, reprojection_residuals, Feature2D3D, ValidationError};
use crate::frames::GlobalPose;

/// Relative singular value below which a direction counts as unobservable.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    pub frame: usize,
    pub pose: GlobalPose,
    pub features: Vec<Feature2D3D>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEstimate {
    pub frame: usize,
    /// Rotation about forward, right, down that best aligns the pose with
    /// its observations (roll, pitch, yaw) [rad].
    pub delta: [f64; 3],
    pub features_used: usize,
    pub behind_camera: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientationErrorEstimate {
    pub frames: Vec<FrameEstimate>,
    /// Componentwise `sqrt(mean(delta^2))` (roll, pitch, yaw) [rad].
    pub rmse: [f64; 3],
    pub rmse_deg: [f64; 3],
    pub failures: Vec<FrameFailure>,
}

/// Minimizes `|r + J x|` for a `2n x 3` Jacobian; also returns the rank of `J`.
pub fn solve_stacked(jacobian: &DMatrix<f64>, residuals: &DVector<f64>) -> (Vector3<f64>, usize) {
    let svd = jacobian.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > smax * RANK_TOL && **s > 0.0).count();
    if rank < 3 {
        return (Vector3::zeros(), rank);
    }
    let x = svd.solve(&(-residuals), 0.0).expect("both factors computed");
    (Vector3::new(x[0], x[1], x[2]), rank)
}

pub fn frame_orientation_error(frame: &FrameFeatures) -> Result<FrameEstimate, ValidationError> {
    let residuals = reprojection_residuals(&frame.pose, &frame.features);
    let usable: Vec<(&Feature2D3D, nalgebra::Vector2<f64>)> = frame
        .features
        .iter()
        .zip(&residuals)
        .filter_map(|(f, r)| r.as_ref().ok().map(|r| (f, *r)))
        .collect();
    let behind = frame.features.len() - usable.len();
    if usable.len() < 2 {
        return Err(ValidationError::Underdetermined {
            frame: frame.frame,
            usable: usable.len(),
        });
    }
    let mut j = DMatrix::zeros(2 * usable.len(), 3);
    let mut r = DVector::zeros(2 * usable.len());
    for (i, (f, res)) in usable.iter().enumerate() {
        debug_assert!(camera_point(&frame.pose, &f.world).z > 0.0);
        let ji = orientation_jacobian(&frame.pose, &f.intrinsics, &f.world);
        j.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&ji);
        r[2 * i] = res.x;
        r[2 * i + 1] = res.y;
    }
    let (delta, rank) = solve_stacked(&j, &r);
    if rank < 3 {
        return Err(ValidationError::RankDeficient {
            frame: frame.frame,
            rank,
        });
    }
    Ok(FrameEstimate {
        frame: frame.frame,
        delta: [delta.x, delta.y, delta.z],
        features_used: usable.len(),
        behind_camera: behind,
    })
}

/// Per-frame estimates and their componentwise RMSE. Frames that cannot be
/// solved are listed in `failures`; it is an error only if none can.
pub fn orientation_rmse(frames: &[FrameFeatures]) -> Result<OrientationErrorEstimate, ValidationError> {
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for f in frames {
        match frame_orientation_error(f) {
            Ok(e) => estimates.push(e),
            Err(e) => {
                failures.push(FrameFailure {
                    frame: f.frame,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if estimates.is_empty() {
        return Err(first_error.unwrap_or(ValidationError::NoUsableFrames));
    }
    let n = estimates.len() as f64;
    let mut rmse = [0.0; 3];
    for (k, v) in rmse.iter_mut().enumerate() {
        *v = (estimates.iter().map(|e| e.delta[k] * e.delta[k]).sum::<f64>() / n).sqrt();
    }
    Ok(OrientationErrorEstimate {
        frames: estimates,
        rmse,
        rmse_deg: rmse.map(f64::to_degrees),
        failures,
    })
}

/// Groups features by frame; `frame` indexes `poses`. Frames without
/// features are omitted.
pub fn group_by_frame(poses: &[GlobalPose], features: &[Feature2D3D]) -> Result<Vec<FrameFeatures>, ValidationError> {
    let mut frames: Vec<Vec<Feature2D3D>> = vec![Vec::new(); poses.len()];
    for f in features {
        let slot = frames.get_mut(f.frame).ok_or(ValidationError::UnknownFrame {
            frame: f.frame,
            frames: poses.len(),
        })?;
        slot.push(*f);
    }
    Ok(frames
        .into_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(frame, features)| FrameFeatures {
            frame,
            pose: poses[frame],
            features,
        })
        .collect())
}
