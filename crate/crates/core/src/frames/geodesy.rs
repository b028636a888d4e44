use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{FrameError, WGS84_A, WGS84_E2};

/// Inputs closer to the geocenter than this are rejected by [`ecef_to_geodetic`].
const MIN_GEODETIC_NORM: f64 = 1e5;

/// Earth-centered, earth-fixed position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcefPosition(pub Vector3<f64>);

impl EcefPosition {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn distance(&self, other: &EcefPosition) -> f64 {
        (self.0 - other.0).norm()
    }
}

impl From<Vector3<f64>> for EcefPosition {
    fn from(v: Vector3<f64>) -> Self {
        Self(v)
    }
}

/// WGS84 latitude/longitude in degrees and ellipsoidal height in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

impl GeodeticPosition {
    pub fn new(lat_deg: f64, lon_deg: f64, height: f64) -> Self {
        Self {
            lat_deg,
            lon_deg,
            height,
        }
    }
}

pub fn geodetic_to_ecef(g: &GeodeticPosition) -> EcefPosition {
    let (slat, clat) = g.lat_deg.to_radians().sin_cos();
    let (slon, clon) = g.lon_deg.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * slat * slat).sqrt();
    EcefPosition::new(
        (n + g.height) * clat * clon,
        (n + g.height) * clat * slon,
        (n * (1.0 - WGS84_E2) + g.height) * slat,
    )
}

/// Closed-form (Vermeille) inverse of [`geodetic_to_ecef`].
pub fn ecef_to_geodetic(p: &EcefPosition) -> Result<GeodeticPosition, FrameError> {
    let norm = p.norm();
    if !(norm >= MIN_GEODETIC_NORM) {
        return Err(FrameError::NearSingular { norm });
    }
    let (x, y, z) = (p.x(), p.y(), p.z());
    let e4 = WGS84_E2 * WGS84_E2;
    let rho2 = x * x + y * y;
    let rho = rho2.sqrt();

    let pp = rho2 / (WGS84_A * WGS84_A);
    let q = (1.0 - WGS84_E2) / (WGS84_A * WGS84_A) * z * z;
    let r = (pp + q - e4) / 6.0;
    let s = e4 * pp * q / (4.0 * r * r * r);
    let t = (1.0 + s + (s * (2.0 + s)).sqrt()).cbrt();
    let u = r * (1.0 + t + 1.0 / t);
    let v = (u * u + e4 * q).sqrt();
    let w = WGS84_E2 * (u + v - q) / (2.0 * v);
    let k = (u + v + w * w).sqrt() - w;
    let d = k * rho / (k + WGS84_E2);
    let dz = (d * d + z * z).sqrt();

    let lat = 2.0 * z.atan2(d + dz);
    let height = (k + WGS84_E2 - 1.0) / k * dz;
    let mut lon = y.atan2(x).to_degrees();
    if lon >= 180.0 {
        lon -= 360.0;
    }
    Ok(GeodeticPosition {
        lat_deg: lat.to_degrees(),
        lon_deg: lon,
        height,
    })
}

/// Rotation matrix taking ECEF vectors into North-East-Down at `g`.
pub fn ned_matrix(g: &GeodeticPosition) -> Matrix3<f64> {
    let (slat, clat) = g.lat_deg.to_radians().sin_cos();
    let (slon, clon) = g.lon_deg.to_radians().sin_cos();
    Matrix3::new(
        -slat * clon, -slat * slon, clat, //
        -slon, clon, 0.0, //
        -clat * clon, -clat * slon, -slat,
    )
}

/// Quaternion form of [`ned_matrix`].
pub fn ned_rotation_at(g: &GeodeticPosition) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(ned_matrix(g)))
}

/// A local NED tangent plane anchored at an ECEF point.
///
/// The rotation is fixed at construction; [`TangentPlane::translated`] moves
/// the anchor without re-orienting the axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentPlane {
    pub origin: EcefPosition,
    pub rotation: Matrix3<f64>,
}

impl TangentPlane {
    pub fn at(origin: &GeodeticPosition) -> Self {
        Self {
            origin: geodetic_to_ecef(origin),
            rotation: ned_matrix(origin),
        }
    }

    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            origin: EcefPosition(self.origin.0 + offset),
            rotation: self.rotation,
        }
    }

    /// North, east, down coordinates of `p` relative to the anchor.
    pub fn to_ned(&self, p: &EcefPosition) -> Vector3<f64> {
        self.rotation * (p.0 - self.origin.0)
    }

    pub fn from_ned(&self, ned: &Vector3<f64>) -> EcefPosition {
        EcefPosition(self.origin.0 + self.rotation.transpose() * ned)
    }
}
