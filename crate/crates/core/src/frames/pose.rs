use std::io::{BufRead, Write};

use nalgebra::{Matrix3, Quaternion as RawQuaternion, UnitQuaternion, Vector3};

use super::{EcefPosition, FrameError, GnssTime};

/// Unit quaternion rotating ECEF vectors into a local frame.
pub type Quaternion = UnitQuaternion<f64>;

/// Builds a unit quaternion from scalar-first components, normalizing.
pub fn quat_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Quaternion {
    UnitQuaternion::from_quaternion(RawQuaternion::new(w, x, y, z))
}

pub fn quat_to_wxyz(q: &Quaternion) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Rotation angle between two orientations [rad]; `q` and `-q` are the same rotation.
pub fn quat_angle_between(a: &Quaternion, b: &Quaternion) -> f64 {
    let d = a.inverse() * b;
    2.0 * d.imag().norm().atan2(d.w.abs())
}

/// Compares rotations up to `tol` radians, treating `q` and `-q` as equal.
pub fn quat_approx_eq(a: &Quaternion, b: &Quaternion, tol: f64) -> bool {
    quat_angle_between(a, b) <= tol
}

/// ECEF position, ECEF-to-local orientation and timestamp of a camera/vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalPose {
    pub time: GnssTime,
    pub position: EcefPosition,
    pub orientation: Quaternion,
}

impl GlobalPose {
    pub fn new(time: GnssTime, position: EcefPosition, orientation: Quaternion) -> Self {
        Self {
            time,
            position,
            orientation,
        }
    }

    /// ECEF-to-local rotation; rows are forward, right, down in ECEF.
    pub fn rotation(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    /// Rotates the body by the small-angle vector `dtheta` = (roll, pitch, yaw)
    /// about its own forward, right, down axes.
    pub fn rotated_in_body(&self, dtheta: &Vector3<f64>) -> Self {
        let body = UnitQuaternion::from_scaled_axis(*dtheta);
        Self {
            orientation: body.inverse() * self.orientation,
            ..*self
        }
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            position: EcefPosition(self.position.0 + offset),
            ..*self
        }
    }

    /// Expresses an ECEF point in this pose's local frame.
    pub fn to_local(&self, p: &EcefPosition) -> Vector3<f64> {
        self.orientation * (p.0 - self.position.0)
    }

    pub fn from_local(&self, local: &Vector3<f64>) -> EcefPosition {
        EcefPosition(self.position.0 + self.orientation.inverse() * local)
    }
}

/// Forward, right and down axes of the pose expressed in ECEF.
pub fn pose_local_axes(pose: &GlobalPose) -> [Vector3<f64>; 3] {
    let r = pose.rotation();
    [
        r.row(0).transpose(),
        r.row(1).transpose(),
        r.row(2).transpose(),
    ]
}

/// Writes `week,tow,ecef_x,ecef_y,ecef_z,qw,qx,qy,qz` records. Floats use the
/// shortest representation that round-trips exactly.
pub fn write_pose_csv<W: Write>(mut out: W, poses: &[GlobalPose]) -> std::io::Result<()> {
    for p in poses {
        let [w, x, y, z] = quat_to_wxyz(&p.orientation);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.time.week(),
            p.time.tow(),
            p.position.x(),
            p.position.y(),
            p.position.z(),
            w,
            x,
            y,
            z
        )?;
    }
    Ok(())
}

/// Reads pose records; blank lines and `#` comments are ignored.
///
/// Unlike the raw-record reader this is strict: the first bad line is an error.
pub fn read_pose_csv<R: BufRead>(input: R) -> Result<Vec<GlobalPose>, FrameError> {
    let mut poses = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("week") {
            continue;
        }
        let bad = |reason: &str| FrameError::PoseRecord {
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 9 {
            return Err(bad("expected 9 fields"));
        }
        let week: i64 = fields[0].parse().map_err(|_| bad("bad week"))?;
        let mut vals = [0.0f64; 8];
        for (v, f) in vals.iter_mut().zip(&fields[1..]) {
            *v = f.parse().map_err(|_| bad("bad number"))?;
            if !v.is_finite() {
                return Err(bad("non-finite value"));
            }
        }
        let time = GnssTime::new(week, vals[0]).map_err(|_| bad("bad time"))?;
        let raw = RawQuaternion::new(vals[4], vals[5], vals[6], vals[7]);
        let norm_err = (raw.norm() - 1.0).abs();
        if norm_err > 1e-6 {
            return Err(bad("quaternion is not unit norm"));
        }
        // keep the stored bits when already normalized so files round-trip exactly
        let orientation = if norm_err < 1e-12 {
            UnitQuaternion::new_unchecked(raw)
        } else {
            UnitQuaternion::from_quaternion(raw)
        };
        poses.push(GlobalPose::new(
            time,
            EcefPosition::new(vals[1], vals[2], vals[3]),
            orientation,
        ));
    }
    Ok(poses)
}
