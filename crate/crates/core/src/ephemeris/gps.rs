use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{EphemerisError, SatState, GPS_MU, OMEGA_EARTH, RELATIVISTIC_F};
use crate::frames::{EcefPosition, GnssTime};

/// Default fit interval half-width [s].
pub const GPS_MAX_AGE: f64 = 4.0 * 3600.0;

const KEPLER_MAX_ITER: usize = 20;
const KEPLER_TOL: f64 = 1e-12;

/// GPS broadcast (LNAV) ephemeris. Angles in radians, rates in rad/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeplerEphemeris {
    pub toe: GnssTime,
    pub toc: GnssTime,
    pub sqrt_a: f64,
    pub e: f64,
    pub i0: f64,
    pub omega0: f64,
    pub omega: f64,
    pub m0: f64,
    pub delta_n: f64,
    pub idot: f64,
    pub omega_dot: f64,
    pub cuc: f64,
    pub cus: f64,
    pub crc: f64,
    pub crs: f64,
    pub cic: f64,
    pub cis: f64,
    pub af0: f64,
    pub af1: f64,
    pub af2: f64,
    pub tgd: f64,
    pub iode: f64,
    pub iodc: f64,
    pub codes_l2: f64,
    pub l2p_flag: f64,
    pub ura: f64,
    pub health: f64,
    /// Transmission time of message, seconds of GPS week.
    pub transmit_tow: f64,
    /// Fit interval [h] as broadcast (0 means the default 4 h).
    pub fit_interval: f64,
}

impl KeplerEphemeris {
    /// Checks the physical plausibility bounds every usable record meets.
    pub fn check(&self) -> Result<(), String> {
        let a = self.sqrt_a * self.sqrt_a;
        if !(0.0..0.1).contains(&self.e) {
            return Err(format!("eccentricity {} outside [0, 0.1)", self.e));
        }
        if !(2.0e7..=3.0e7).contains(&a) {
            return Err(format!("semi-major axis {a} m outside [2e7, 3e7]"));
        }
        let all = [
            self.i0, self.omega0, self.omega, self.m0, self.delta_n, self.idot,
            self.omega_dot, self.cuc, self.cus, self.crc, self.crs, self.cic, self.cis,
            self.af0, self.af1, self.af2, self.tgd,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("non-finite orbital element".into());
        }
        if self.af0.abs() >= 1e-3 {
            return Err(format!("clock bias {} s implausible", self.af0));
        }
        Ok(())
    }
}

/// Solves Kepler's equation `E - e sin E = M` by Newton iteration.
pub fn kepler_solve(mean_anomaly: f64, e: f64) -> Result<f64, EphemerisError> {
    let fail = EphemerisError::NoConvergence {
        mean_anomaly,
        eccentricity: e,
    };
    if !mean_anomaly.is_finite() || !(0.0..1.0).contains(&e) {
        return Err(fail);
    }
    let turns = (mean_anomaly / std::f64::consts::TAU).floor();
    let offset = turns * std::f64::consts::TAU;
    let m = mean_anomaly - offset;
    let mut ecc = m;
    for _ in 0..KEPLER_MAX_ITER {
        let f = ecc - e * ecc.sin() - m;
        if f.abs() < KEPLER_TOL {
            return Ok(ecc + offset);
        }
        ecc -= f / (1.0 - e * ecc.cos());
    }
    if (ecc - e * ecc.sin() - m).abs() < KEPLER_TOL {
        return Ok(ecc + offset);
    }
    Err(fail)
}

pub fn gps_sat_state(eph: &KeplerEphemeris, t: &GnssTime) -> Result<SatState, EphemerisError> {
    gps_sat_state_with_max_age(eph, t, GPS_MAX_AGE)
}

/// Satellite state at GPS time `t` following the IS-GPS-200 user algorithm.
///
/// Velocity and clock drift are analytic time derivatives of the same
/// expressions (no numerical differencing). The clock bias includes the
/// relativistic eccentricity term and removes the L1 group delay.
pub fn gps_sat_state_with_max_age(
    eph: &KeplerEphemeris,
    t: &GnssTime,
    max_age: f64,
) -> Result<SatState, EphemerisError> {
    let tk = *t - eph.toe;
    if !(tk.abs() <= max_age) {
        return Err(EphemerisError::StaleEphemeris {
            age_s: tk,
            limit_s: max_age,
        });
    }
    let a = eph.sqrt_a * eph.sqrt_a;
    let n = (GPS_MU / (a * a * a)).sqrt() + eph.delta_n;
    let mk = eph.m0 + n * tk;
    let ek = kepler_solve(mk, eph.e)?;
    let (sin_e, cos_e) = ek.sin_cos();
    let one_minus = 1.0 - eph.e * cos_e;
    let root = (1.0 - eph.e * eph.e).sqrt();

    let nu = (root * sin_e).atan2(cos_e - eph.e);
    let phi = nu + eph.omega;
    let (s2, c2) = (2.0 * phi).sin_cos();
    let du = eph.cus * s2 + eph.cuc * c2;
    let dr = eph.crs * s2 + eph.crc * c2;
    let di = eph.cis * s2 + eph.cic * c2;
    let u = phi + du;
    let r = a * one_minus + dr;
    let inc = eph.i0 + di + eph.idot * tk;
    let node_rate = eph.omega_dot - OMEGA_EARTH;
    let node = eph.omega0 + node_rate * tk - OMEGA_EARTH * eph.toe.tow();

    let (su, cu) = u.sin_cos();
    let (si, ci) = inc.sin_cos();
    let (so, co) = node.sin_cos();
    let xp = r * cu;
    let yp = r * su;
    let x = xp * co - yp * ci * so;
    let y = xp * so + yp * ci * co;
    let z = yp * si;

    let e_dot = n / one_minus;
    let phi_dot = e_dot * root / one_minus;
    let u_dot = phi_dot * (1.0 + 2.0 * (eph.cus * c2 - eph.cuc * s2));
    let r_dot = a * eph.e * sin_e * e_dot + 2.0 * phi_dot * (eph.crs * c2 - eph.crc * s2);
    let i_dot = eph.idot + 2.0 * phi_dot * (eph.cis * c2 - eph.cic * s2);
    let xp_dot = r_dot * cu - r * u_dot * su;
    let yp_dot = r_dot * su + r * u_dot * cu;
    let vx = xp_dot * co - yp_dot * ci * so + yp * si * so * i_dot - y * node_rate;
    let vy = xp_dot * so + yp_dot * ci * co - yp * si * co * i_dot + x * node_rate;
    let vz = yp_dot * si + yp * ci * i_dot;

    let dt = *t - eph.toc;
    let rel = RELATIVISTIC_F * eph.e * eph.sqrt_a * sin_e;
    let rel_dot = RELATIVISTIC_F * eph.e * eph.sqrt_a * cos_e * e_dot;
    Ok(SatState {
        position: EcefPosition::new(x, y, z),
        velocity: Vector3::new(vx, vy, vz),
        clock_bias: eph.af0 + eph.af1 * dt + eph.af2 * dt * dt + rel - eph.tgd,
        clock_drift: eph.af1 + 2.0 * eph.af2 * dt + rel_dot,
    })
}
