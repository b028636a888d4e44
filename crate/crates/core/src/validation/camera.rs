//! Pinhole camera attached to a pose. The camera frame is `x` right, `y`
//! down, `z` forward, i.e. the pose's local `[forward, right, down]` axes
//! permuted.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Feature2D3D, ValidationError};
use crate::frames::{EcefPosition, GlobalPose};

/// Maps local `(forward, right, down)` to camera `(right, down, forward)`.
pub const CAMERA_FROM_LOCAL: Matrix3<f64> = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn check(&self) -> Result<(), ValidationError> {
        let all = [self.fx, self.fy, self.cx, self.cy];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(ValidationError::InvalidIntrinsics(format!("{all:?}")))
        }
    }

    fn projection_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz * iz,
        )
    }
}

/// World point in the camera frame of `pose`.
pub fn camera_point(pose: &GlobalPose, world: &EcefPosition) -> Vector3<f64> {
    CAMERA_FROM_LOCAL * pose.to_local(world)
}

/// Pixel coordinates of `world`; `None` unless it is in front of the camera.
pub fn project(pose: &GlobalPose, k: &Intrinsics, world: &EcefPosition) -> Option<Vector2<f64>> {
    let p = camera_point(pose, world);
    (p.z > 0.0).then(|| Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
}

/// Projected minus observed pixel for each feature.
pub fn reprojection_residuals(
    pose: &GlobalPose,
    features: &[Feature2D3D],
) -> Vec<Result<Vector2<f64>, ValidationError>> {
    features
        .iter()
        .map(|f| {
            let p = camera_point(pose, &f.world);
            if p.z <= 0.0 {
                return Err(ValidationError::BehindCamera {
                    feature: f.feature,
                    depth: p.z,
                });
            }
            let k = &f.intrinsics;
            let uv = Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
            Ok(uv - f.pixel)
        })
        .collect()
}

/// Derivative of the projected pixel with respect to a small body rotation
/// `dtheta` applied as [`GlobalPose::rotated_in_body`], at `dtheta = 0`.
pub fn orientation_jacobian(pose: &GlobalPose, k: &Intrinsics, world: &EcefPosition) -> Matrix2x3<f64> {
    let local = pose.to_local(world);
    let p = CAMERA_FROM_LOCAL * local;
    // the local point moves by local x dtheta under a body rotation
    k.projection_jacobian(&p) * CAMERA_FROM_LOCAL * local.cross_matrix()
}

/// Derivative of the projected pixel with respect to the ECEF camera position.
pub fn translation_jacobian(pose: &GlobalPose, k: &Intrinsics, world: &EcefPosition) -> Matrix2x3<f64> {
    let p = camera_point(pose, world);
    -k.projection_jacobian(&p) * CAMERA_FROM_LOCAL * pose.rotation()
}
