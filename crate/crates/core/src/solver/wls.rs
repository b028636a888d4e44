use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::dop::{dop_of, normal_inverse, MAX_CONDITION};
use super::{PvtSolution, SolverError};
use crate::ephemeris::{OMEGA_EARTH, SPEED_OF_LIGHT};
use crate::frames::{ecef_to_geodetic, EcefPosition, GeodeticPosition};
use crate::measurements::ProcessedMeasurement;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WlsConfig {
    pub max_iterations: usize,
    /// Step norm that ends the iteration [m].
    pub tolerance: f64,
}

impl Default for WlsConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            tolerance: 1e-4,
        }
    }
}

/// Geometry rows `[-u, 1, (is_glonass)]` at `rx`, one per measurement.
/// The GLONASS column is present only when `with_glonass` is set.
pub fn geometry_matrix(meas: &[ProcessedMeasurement], rx: &Vector3<f64>, with_glonass: bool) -> DMatrix<f64> {
    let k = if with_glonass { 5 } else { 4 };
    let mut g = DMatrix::zeros(meas.len(), k);
    for (i, m) in meas.iter().enumerate() {
        let u = (m.sat_state.position.0 - rx).normalize();
        g[(i, 0)] = -u.x;
        g[(i, 1)] = -u.y;
        g[(i, 2)] = -u.z;
        g[(i, 3)] = 1.0;
        if with_glonass && m.sat.is_glonass() {
            g[(i, 4)] = 1.0;
        }
    }
    g
}

fn residuals(meas: &[ProcessedMeasurement], x: &DVector<f64>, with_glonass: bool) -> DVector<f64> {
    let rx = Vector3::new(x[0], x[1], x[2]);
    DVector::from_iterator(
        meas.len(),
        meas.iter().map(|m| {
            let mut pred = (m.sat_state.position.0 - rx).norm() + x[3];
            if with_glonass && m.sat.is_glonass() {
                pred += x[4];
            }
            m.range_observable() - pred
        }),
    )
}

/// Receiver velocity and clock drift from pseudorange rates at a known
/// position, by unweighted least squares. Each rate is modeled with the
/// signal light-time factor; `None` when fewer than four rates exist or the
/// geometry is singular.
pub fn velocity_solve(meas: &[ProcessedMeasurement], rx: &Vector3<f64>) -> Option<(Vector3<f64>, f64)> {
    let with_rate: Vec<_> = meas.iter().filter_map(|m| m.pseudorange_rate.map(|r| (m, r))).collect();
    if with_rate.len() < 4 {
        return None;
    }
    let n = with_rate.len();
    let mut g = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    for (i, (m, rate)) in with_rate.iter().enumerate() {
        let s = &m.sat_state.position.0;
        let vs = &m.sat_state.velocity;
        let u = (s - rx).normalize();
        let b = u.dot(&(OMEGA_EARTH * Vector3::new(s.y, -s.x, 0.0) - vs));
        let k = 1.0 - b / SPEED_OF_LIGHT;
        g[(i, 0)] = -u.x;
        g[(i, 1)] = -u.y;
        g[(i, 2)] = -u.z;
        g[(i, 3)] = 1.0;
        y[i] = k * rate - u.dot(vs);
    }
    let svd = g.svd(true, true);
    let s = &svd.singular_values;
    if !(s.min() > 0.0 && s.max() / s.min() <= MAX_CONDITION) {
        return None;
    }
    let sol = svd.solve(&y, 0.0).ok()?;
    Some((Vector3::new(sol[0], sol[1], sol[2]), sol[3]))
}

/// Weighted least-squares fix by Gauss-Newton from `initial`.
///
/// Unknowns are position, receiver clock and, when both constellations
/// are present, a GLONASS inter-system bias.
pub fn wls_solve(
    meas: &[ProcessedMeasurement],
    initial: &EcefPosition,
    cfg: &WlsConfig,
) -> Result<PvtSolution, SolverError> {
    let n_glo = meas.iter().filter(|m| m.sat.is_glonass()).count();
    let mixed = n_glo > 0 && n_glo < meas.len();
    let k = if mixed { 5 } else { 4 };
    if meas.len() < k {
        return Err(SolverError::Underdetermined {
            available: meas.len(),
            required: k,
        });
    }
    let sqrt_w = DVector::from_iterator(meas.len(), meas.iter().map(|m| m.weight.sqrt()));
    let mut x = DVector::zeros(k);
    x.fixed_rows_mut::<3>(0).copy_from(&initial.0);

    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        let rx = Vector3::new(x[0], x[1], x[2]);
        let g = geometry_matrix(meas, &rx, mixed);
        let r = residuals(meas, &x, mixed);
        let gw = DMatrix::from_fn(g.nrows(), k, |i, j| g[(i, j)] * sqrt_w[i]);
        let rw = r.component_mul(&sqrt_w);
        let svd = gw.svd(true, true);
        let s = &svd.singular_values;
        let condition = if s.min() > 0.0 { s.max() / s.min() } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(SolverError::SingularGeometry { condition });
        }
        let dx = svd.solve(&rw, 0.0).map_err(|e| SolverError::Input(e.to_string()))?;
        x += &dx;
        if dx.norm() < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolverError::NoConvergence {
            iterations: cfg.max_iterations,
        });
    }

    let rx = Vector3::new(x[0], x[1], x[2]);
    let position = EcefPosition(rx);
    let g = geometry_matrix(meas, &rx, mixed);
    let gw = DMatrix::from_fn(g.nrows(), k, |i, j| g[(i, j)] * sqrt_w[i]);
    let covariance = normal_inverse(&gw)?;
    let geo = ecef_to_geodetic(&position).unwrap_or(GeodeticPosition::new(0.0, 0.0, 0.0));
    let dop = dop_of(&g, &geo)?;
    let (velocity, clock_drift, velocity_valid) = match velocity_solve(meas, &rx) {
        Some((v, d)) => (v, d, true),
        None => (Vector3::zeros(), 0.0, false),
    };
    Ok(PvtSolution {
        time: meas[0].time,
        position,
        velocity,
        velocity_valid,
        clock_bias: x[3],
        clock_drift,
        glonass_bias: if mixed { x[4] } else { 0.0 },
        covariance,
        dop,
        n_sats_used: meas.len(),
        residuals: residuals(meas, &x, mixed).iter().copied().collect(),
    })
}
