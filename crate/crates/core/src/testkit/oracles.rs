//! Independent reference implementations used by the test suites.
//!
//! These are deliberately plain and slow: fixed-point iteration instead of
//! Newton, explicit rotation matrices instead of closed-form expansions,
//! Gauss-Jordan elimination instead of library decompositions, and grid
//! searches instead of fixed points. None of them call into the main path.

use nalgebra::{Matrix3, Vector3};

use crate::ephemeris::KeplerEphemeris;

const MU: f64 = 3.986005e14;
const OMEGA_E: f64 = 7.2921151467e-5;
const C: f64 = 2.99792458e8;

/// `E_{k+1} = M + e sin E_k`, starting at `E_0 = M`.
pub fn kepler_fixed_point(m: f64, e: f64, iters: usize) -> f64 {
    let mut ecc = m;
    for _ in 0..iters {
        ecc = m + e * ecc.sin();
    }
    ecc
}

fn rot1(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

fn rot3(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Broadcast-orbit ECEF position at `tk` seconds from toe, computed step by
/// step from the interface table with the orbit rotated into place by
/// elementary rotation matrices.
pub fn gps_position_table(eph: &KeplerEphemeris, tk: f64) -> Vector3<f64> {
    let a = eph.sqrt_a.powi(2);
    let n0 = (MU / a.powi(3)).sqrt();
    let n = n0 + eph.delta_n;
    let mk = eph.m0 + n * tk;
    let ek = kepler_fixed_point(mk, eph.e, 200);
    let cos_nu = (ek.cos() - eph.e) / (1.0 - eph.e * ek.cos());
    let sin_nu = (1.0 - eph.e.powi(2)).sqrt() * ek.sin() / (1.0 - eph.e * ek.cos());
    let nu = sin_nu.atan2(cos_nu);
    let phi = nu + eph.omega;
    let du = eph.cus * (2.0 * phi).sin() + eph.cuc * (2.0 * phi).cos();
    let dr = eph.crs * (2.0 * phi).sin() + eph.crc * (2.0 * phi).cos();
    let di = eph.cis * (2.0 * phi).sin() + eph.cic * (2.0 * phi).cos();
    let u = phi + du;
    let r = a * (1.0 - eph.e * ek.cos()) + dr;
    let i = eph.i0 + di + eph.idot * tk;
    let node = eph.omega0 + (eph.omega_dot - OMEGA_E) * tk - OMEGA_E * eph.toe.tow();
    // orbital frame -> ECEF: R3(-node) R1(-i) R3(-u) applied to (r, 0, 0)
    rot3(-node) * rot1(-i) * rot3(-u) * Vector3::new(r, 0.0, 0.0)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
/// Returns `None` when a pivot falls below `1e-300`.
pub fn dense_inverse(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// `(A^T A)^{-1}` for row-major `rows`, via [`dense_inverse`].
pub fn normal_inverse(rows: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let k = rows.first()?.len();
    let mut n = vec![vec![0.0; k]; k];
    for r in rows {
        for i in 0..k {
            for j in 0..k {
                n[i][j] += r[i] * r[j];
            }
        }
    }
    dense_inverse(&n)
}

/// Signal flight time found by dense bracketing and bisection of the
/// geometric emission constraint `c tau = |R3(w tau) s(t_rx - tau) - rx| + bias`.
///
/// `sat` maps the emission offset (seconds before reception) to the ECEF
/// position at emission; `bias` lumps receiver clock and path delays [m].
pub fn transmit_time_grid_search(
    sat: impl Fn(f64) -> Vector3<f64>,
    rx: &Vector3<f64>,
    bias: f64,
) -> f64 {
    let g = |tau: f64| {
        let s = sat(tau);
        let (sn, cs) = (OMEGA_E * tau).sin_cos();
        let rotated = Vector3::new(cs * s.x + sn * s.y, -sn * s.x + cs * s.y, s.z);
        C * tau - (rotated - rx).norm() - bias
    };
    // 1 us grid over 0..200 ms, then bisection inside the bracketing cell
    let (lo, hi, steps) = (0.0, 0.2, 200_000);
    let h = (hi - lo) / steps as f64;
    let mut a = lo;
    for k in 0..steps {
        let t0 = lo + k as f64 * h;
        if g(t0).signum() != g(t0 + h).signum() {
            a = t0;
            break;
        }
    }
    let mut b = a + h;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(a).signum() == g(m).signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Pinhole projection of a camera-frame point `(x right, y down, z forward)`.
pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, p: &Vector3<f64>) -> (f64, f64) {
    (fx * p.x / p.z + cx, fy * p.y / p.z + cy)
}
