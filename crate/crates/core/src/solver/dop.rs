use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::frames::{ned_matrix, GeodeticPosition};

/// Largest accepted condition number of a geometry matrix.
pub(crate) const MAX_CONDITION: f64 = 1e10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dop {
    pub gdop: f64,
    pub pdop: f64,
    pub hdop: f64,
    pub vdop: f64,
    pub tdop: f64,
}

/// Condition number and `(G^T G)^{-1}` from the singular values of `g`.
pub(crate) fn normal_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>, SolverError> {
    let svd = g.clone().svd(false, true);
    let s = &svd.singular_values;
    let (max, min) = (s.max(), s.min());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(SolverError::SingularGeometry { condition });
    }
    let v_t = svd.v_t.expect("requested V^T");
    let inv_s2 = DMatrix::from_diagonal(&s.map(|x| 1.0 / (x * x)));
    Ok(v_t.transpose() * inv_s2 * v_t)
}

/// Dilution of precision for geometry rows `g` (columns x, y, z, clock and
/// optionally a GLONASS bias), split into horizontal and vertical parts at
/// `receiver`. GDOP covers position and the GPS clock.
pub fn dop_of(g: &DMatrix<f64>, receiver: &GeodeticPosition) -> Result<Dop, SolverError> {
    let k = g.ncols();
    if g.nrows() < k || k < 4 {
        return Err(SolverError::Underdetermined {
            available: g.nrows(),
            required: k.max(4),
        });
    }
    let q = normal_inverse(g)?;
    let pos: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into_owned();
    let r = ned_matrix(receiver);
    let ned = r * pos * r.transpose();
    let hdop = (ned[(0, 0)] + ned[(1, 1)]).sqrt();
    let vdop = ned[(2, 2)].sqrt();
    let pdop = pos.trace().sqrt();
    let tdop = q[(3, 3)].sqrt();
    Ok(Dop {
        gdop: (pos.trace() + q[(3, 3)]).sqrt(),
        pdop,
        hdop,
        vdop,
        tdop,
    })
}
