use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{EphemerisError, SatState};
use crate::frames::{EcefPosition, GnssTime};

/// Validity half-window around `tb` [s].
pub const GLONASS_MAX_AGE: f64 = 15.0 * 60.0;
/// Integration step [s].
pub const GLONASS_STEP: f64 = 60.0;

// PZ-90 constants from the GLONASS ICD
const MU: f64 = 398600.4418e9;
const AE: f64 = 6378136.0;
const J2: f64 = 1082.62575e-6;
const OMEGA: f64 = 7.292115e-5;

/// GLONASS broadcast ephemeris: ECEF (PZ-90, treated as WGS84) state vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlonassEphemeris {
    /// Reference epoch, already converted to the GPS timescale.
    pub tb: GnssTime,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Lunisolar acceleration, held constant over the fit window [m/s^2].
    pub acceleration: Vector3<f64>,
    /// Clock offset tau_n [s]; satellite clock bias is `-tau_n + gamma_n dt`.
    pub tau_n: f64,
    pub gamma_n: f64,
    pub freq_channel: i8,
    pub health: f64,
    pub age: f64,
    /// Message frame time, seconds of UTC day as broadcast.
    pub frame_time: f64,
}

impl GlonassEphemeris {
    pub fn check(&self) -> Result<(), String> {
        let r = self.position.norm();
        if !(2.4e7..=2.6e7).contains(&r) {
            return Err(format!("orbit radius {r} m outside 2.5e7 +- 1e6"));
        }
        let finite = self.velocity.iter().chain(self.acceleration.iter()).all(|v| v.is_finite())
            && self.tau_n.is_finite()
            && self.gamma_n.is_finite();
        if !finite {
            return Err("non-finite state".into());
        }
        if self.tau_n.abs() >= 1e-3 {
            return Err(format!("clock offset {} s implausible", self.tau_n));
        }
        Ok(())
    }
}

fn acceleration(pos: &Vector3<f64>, vel: &Vector3<f64>, lunisolar: &Vector3<f64>) -> Vector3<f64> {
    let r2 = pos.norm_squared();
    let r = r2.sqrt();
    let mu_r3 = MU / (r2 * r);
    let z2_r2 = pos.z * pos.z / r2;
    let j2 = 1.5 * J2 * MU * AE * AE / (r2 * r2 * r);
    let w2 = OMEGA * OMEGA;
    Vector3::new(
        -mu_r3 * pos.x - j2 * pos.x * (1.0 - 5.0 * z2_r2) + w2 * pos.x + 2.0 * OMEGA * vel.y,
        -mu_r3 * pos.y - j2 * pos.y * (1.0 - 5.0 * z2_r2) + w2 * pos.y - 2.0 * OMEGA * vel.x,
        -mu_r3 * pos.z - j2 * pos.z * (3.0 - 5.0 * z2_r2),
    ) + lunisolar
}

fn rk4_step(
    pos: &Vector3<f64>,
    vel: &Vector3<f64>,
    lunisolar: &Vector3<f64>,
    h: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let k1v = acceleration(pos, vel, lunisolar);
    let k1p = *vel;
    let p2 = pos + k1p * (h / 2.0);
    let v2 = vel + k1v * (h / 2.0);
    let k2v = acceleration(&p2, &v2, lunisolar);
    let k2p = v2;
    let p3 = pos + k2p * (h / 2.0);
    let v3 = vel + k2v * (h / 2.0);
    let k3v = acceleration(&p3, &v3, lunisolar);
    let k3p = v3;
    let p4 = pos + k3p * h;
    let v4 = vel + k3v * h;
    let k4v = acceleration(&p4, &v4, lunisolar);
    let k4p = v4;
    (
        pos + (k1p + 2.0 * k2p + 2.0 * k3p + k4p) * (h / 6.0),
        vel + (k1v + 2.0 * k2v + 2.0 * k3v + k4v) * (h / 6.0),
    )
}

/// Integrates the GLONASS equations of motion (central field, J2, rotating
/// frame terms, constant lunisolar term) by `dt` seconds with fixed RK4
/// steps of at most `step`, ending with one fractional step.
pub fn glonass_propagate(
    position: &Vector3<f64>,
    velocity: &Vector3<f64>,
    lunisolar: &Vector3<f64>,
    dt: f64,
    step: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let mut pos = *position;
    let mut vel = *velocity;
    let h = step.abs() * dt.signum();
    let full = (dt / h).floor() as usize;
    for _ in 0..full {
        (pos, vel) = rk4_step(&pos, &vel, lunisolar, h);
    }
    let rest = dt - full as f64 * h;
    if rest != 0.0 {
        (pos, vel) = rk4_step(&pos, &vel, lunisolar, rest);
    }
    (pos, vel)
}

/// Satellite state at GPS time `t`, valid within 15 minutes of `tb`.
pub fn glonass_sat_state(eph: &GlonassEphemeris, t: &GnssTime) -> Result<SatState, EphemerisError> {
    let dt = *t - eph.tb;
    if !(dt.abs() <= GLONASS_MAX_AGE) {
        return Err(EphemerisError::StaleEphemeris {
            age_s: dt,
            limit_s: GLONASS_MAX_AGE,
        });
    }
    let (pos, vel) = if dt == 0.0 {
        (eph.position, eph.velocity)
    } else {
        glonass_propagate(&eph.position, &eph.velocity, &eph.acceleration, dt, GLONASS_STEP)
    };
    Ok(SatState {
        position: EcefPosition(pos),
        velocity: vel,
        clock_bias: -eph.tau_n + eph.gamma_n * dt,
        clock_drift: eph.gamma_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::sample_glonass_ephemeris;

    /// Specific energy in the inertial frame; conserved when the lunisolar term is zero.
    fn inertial_energy(pos: &Vector3<f64>, vel: &Vector3<f64>) -> f64 {
        let v_in = vel + Vector3::new(0.0, 0.0, OMEGA).cross(pos);
        let r = pos.norm();
        let potential = MU / r - MU * J2 * AE * AE * (3.0 * pos.z * pos.z - r * r) / (2.0 * r.powi(5));
        0.5 * v_in.norm_squared() - potential
    }

    #[test]
    fn zero_length_is_exact() {
        let eph = sample_glonass_ephemeris();
        let s = glonass_sat_state(&eph, &eph.tb).unwrap();
        assert_eq!(s.position.0, eph.position);
        assert_eq!(s.velocity, eph.velocity);
        assert_eq!(s.clock_bias, -eph.tau_n);
    }

    #[test]
    fn step_refinement_converges() {
        let eph = sample_glonass_ephemeris();
        let (p60, _) = glonass_propagate(&eph.position, &eph.velocity, &eph.acceleration, 900.0, 60.0);
        let (p1, _) = glonass_propagate(&eph.position, &eph.velocity, &eph.acceleration, 900.0, 1.0);
        assert!((p60 - p1).norm() < 1e-2, "{}", (p60 - p1).norm());
    }

    #[test]
    fn propagation_is_reversible() {
        let eph = sample_glonass_ephemeris();
        let (p, v) = glonass_propagate(&eph.position, &eph.velocity, &eph.acceleration, 600.0, 60.0);
        let (p0, _) = glonass_propagate(&p, &v, &eph.acceleration, -600.0, 60.0);
        assert!((p0 - eph.position).norm() < 1e-4);
    }

    #[test]
    fn inertial_energy_is_conserved() {
        let eph = sample_glonass_ephemeris();
        let e0 = inertial_energy(&eph.position, &eph.velocity);
        let mut pos = eph.position;
        let mut vel = eph.velocity;
        for _ in 0..15 {
            (pos, vel) = glonass_propagate(&pos, &vel, &Vector3::zeros(), 60.0, 60.0);
            let e = inertial_energy(&pos, &vel);
            assert!(((e - e0) / e0).abs() < 1e-4);
        }
    }

    #[test]
    fn fractional_final_step() {
        let eph = sample_glonass_ephemeris();
        let (a, _) = glonass_propagate(&eph.position, &eph.velocity, &eph.acceleration, 90.0, 60.0);
        let (m, mv) = glonass_propagate(&eph.position, &eph.velocity, &eph.acceleration, 60.0, 60.0);
        let (b, _) = glonass_propagate(&m, &mv, &eph.acceleration, 30.0, 60.0);
        assert_eq!(a, b);
    }

    #[test]
    fn stale_and_clock() {
        let eph = sample_glonass_ephemeris();
        assert!(matches!(
            glonass_sat_state(&eph, &eph.tb.add_seconds(901.0)),
            Err(EphemerisError::StaleEphemeris { .. })
        ));
        let s = glonass_sat_state(&eph, &eph.tb.add_seconds(-300.0)).unwrap();
        assert!((s.clock_bias - (-eph.tau_n - 300.0 * eph.gamma_n)).abs() < 1e-18);
        assert!((2.5e7..2.7e7).contains(&s.position.norm()));
    }
}
