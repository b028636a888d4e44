//! Tightly coupled navigation filter over pseudoranges and pseudorange rates.
//!
//! State: position (3), velocity (3), receiver clock bias and drift, GLONASS
//! inter-system bias, and north/east Gauss-Markov acceleration. The
//! north/east/down axes are frozen at initialization. Discretization is
//! exact for the linear model (Van Loan matrix exponential).

use std::collections::HashMap;

use nalgebra::{DMatrix, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{PvtSolution, SolverError};
use crate::ephemeris::{SatId, OMEGA_EARTH, SPEED_OF_LIGHT};
use crate::frames::{ecef_to_geodetic, ned_matrix, EcefPosition, GnssTime};
use crate::measurements::ProcessedMeasurement;

pub const STATE_DIM: usize = 11;
const POS: usize = 0;
const VEL: usize = 3;
const CB: usize = 6;
const CD: usize = 7;
const GB: usize = 8;
const ACC: usize = 9;

type Vec11 = SVector<f64, STATE_DIM>;
type Mat11 = SMatrix<f64, STATE_DIM, STATE_DIM>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Stationary sigma of the horizontal Gauss-Markov acceleration [m/s^2].
    pub accel_sigma: f64,
    /// Its correlation time [s].
    pub accel_tau: f64,
    /// White vertical acceleration density [m/s^2 / sqrt(Hz)].
    pub vertical_accel_sigma: f64,
    /// Clock bias random-walk density [m^2/s].
    pub clock_bias_psd: f64,
    /// Clock drift random-walk density [m^2/s^3].
    pub clock_drift_psd: f64,
    /// GLONASS bias random-walk density [m^2/s].
    pub glonass_bias_psd: f64,
    /// Innovation gate in standard deviations.
    pub gate_sigma: f64,
    /// Pseudorange-rate measurement sigma [m/s].
    pub rate_sigma: f64,
    /// Longest prediction before the filter must be reinitialized [s].
    pub max_gap: f64,
    /// Speed above which the filter is considered diverged [m/s].
    pub max_speed: f64,
    /// Consecutive fully gated epochs that force a reset.
    pub max_all_gated: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            accel_sigma: 2.0,
            accel_tau: 10.0,
            vertical_accel_sigma: 0.5,
            clock_bias_psd: 0.1,
            clock_drift_psd: 0.01,
            glonass_bias_psd: 1e-4,
            gate_sigma: 5.0,
            rate_sigma: 0.1,
            max_gap: 2.0,
            max_speed: 100.0,
            max_all_gated: 10,
        }
    }
}

impl FilterConfig {
    pub fn check(&self) -> Result<(), String> {
        let nonneg = [
            ("accel_sigma", self.accel_sigma),
            ("vertical_accel_sigma", self.vertical_accel_sigma),
            ("clock_bias_psd", self.clock_bias_psd),
            ("clock_drift_psd", self.clock_drift_psd),
            ("glonass_bias_psd", self.glonass_bias_psd),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be finite and non-negative"));
            }
        }
        let positive = [
            ("accel_tau", self.accel_tau),
            ("gate_sigma", self.gate_sigma),
            ("rate_sigma", self.rate_sigma),
            ("max_gap", self.max_gap),
            ("max_speed", self.max_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.max_all_gated == 0 {
            return Err("max_all_gated must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub x: Vec11,
    pub p: Mat11,
    pub time: GnssTime,
}

impl FilterState {
    pub fn position(&self) -> EcefPosition {
        EcefPosition(self.x.fixed_rows::<3>(POS).into_owned())
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(VEL).into_owned()
    }

    pub fn clock_bias(&self) -> f64 {
        self.x[CB]
    }

    pub fn clock_drift(&self) -> f64 {
        self.x[CD]
    }

    pub fn glonass_bias(&self) -> f64 {
        self.x[GB]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationKind {
    Pseudorange,
    Rate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Innovation {
    pub sat: SatId,
    pub kind: ObservationKind,
    pub innovation: f64,
    /// Innovation variance `H P H^T + R`.
    pub variance: f64,
    pub gated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct UpdateReport {
    pub innovations: Vec<Innovation>,
    pub applied: usize,
    pub gated: usize,
    /// Every offered observation was gated; the state is unchanged.
    pub all_gated: bool,
}

/// Filter dynamics and tuning; caches the discretized model per step length.
#[derive(Clone, Debug)]
pub struct KalmanFilter {
    cfg: FilterConfig,
    axes: [Vector3<f64>; 3],
    cache: HashMap<u64, (Mat11, Mat11)>,
}

impl KalmanFilter {
    pub fn new(cfg: FilterConfig) -> Self {
        Self {
            cfg,
            axes: [Vector3::x(), Vector3::y(), Vector3::z()],
            cache: HashMap::new(),
        }
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    /// Starts a filter at a least-squares fix, fixing the local axes there.
    pub fn init_from_fix(&mut self, fix: &PvtSolution) -> FilterState {
        self.set_axes_at(&fix.position);
        let mut x = Vec11::zeros();
        x.fixed_rows_mut::<3>(POS).copy_from(&fix.position.0);
        x.fixed_rows_mut::<3>(VEL).copy_from(&fix.velocity);
        x[CB] = fix.clock_bias;
        x[CD] = fix.clock_drift;
        x[GB] = fix.glonass_bias;

        let mut p = Mat11::zeros();
        let c = &fix.covariance;
        for i in 0..4 {
            for j in 0..4 {
                let (si, sj) = (if i == 3 { CB } else { i }, if j == 3 { CB } else { j });
                p[(si, sj)] = c[(i, j)];
            }
        }
        p[(GB, GB)] = if c.nrows() == 5 { c[(4, 4)] } else { 100.0f64.powi(2) };
        let v_var = if fix.velocity_valid { 1.0 } else { 100.0 };
        for i in 0..3 {
            p[(VEL + i, VEL + i)] = v_var;
        }
        p[(CD, CD)] = if fix.velocity_valid { 1.0 } else { 1e4 };
        let a_var = self.cfg.accel_sigma.powi(2).max(1e-6);
        p[(ACC, ACC)] = a_var;
        p[(ACC + 1, ACC + 1)] = a_var;
        FilterState { x, p, time: fix.time }
    }

    /// Local north/east/down axes used by the acceleration states.
    pub fn set_axes_at(&mut self, p: &EcefPosition) {
        let r = ecef_to_geodetic(p).map(|g| ned_matrix(&g)).unwrap_or_else(|_| nalgebra::Matrix3::identity());
        self.axes = [
            r.row(0).transpose().into_owned(),
            r.row(1).transpose().into_owned(),
            r.row(2).transpose().into_owned(),
        ];
        self.cache.clear();
    }

    fn continuous_model(&self) -> (Mat11, Mat11) {
        let c = &self.cfg;
        let [north, east, down] = self.axes;
        let mut f = Mat11::zeros();
        let mut q = Mat11::zeros();
        for i in 0..3 {
            f[(POS + i, VEL + i)] = 1.0;
            f[(VEL + i, ACC)] = north[i];
            f[(VEL + i, ACC + 1)] = east[i];
            for j in 0..3 {
                q[(VEL + i, VEL + j)] = c.vertical_accel_sigma.powi(2) * down[i] * down[j];
            }
        }
        f[(CB, CD)] = 1.0;
        f[(ACC, ACC)] = -1.0 / c.accel_tau;
        f[(ACC + 1, ACC + 1)] = -1.0 / c.accel_tau;
        q[(CB, CB)] = c.clock_bias_psd;
        q[(CD, CD)] = c.clock_drift_psd;
        q[(GB, GB)] = c.glonass_bias_psd;
        let gm = 2.0 * c.accel_sigma.powi(2) / c.accel_tau;
        q[(ACC, ACC)] = gm;
        q[(ACC + 1, ACC + 1)] = gm;
        (f, q)
    }

    /// Transition matrix and process noise for a step of `dt` seconds.
    pub fn transition(&mut self, dt: f64) -> (Mat11, Mat11) {
        if let Some(m) = self.cache.get(&dt.to_bits()) {
            return *m;
        }
        let (f, q) = self.continuous_model();
        let n = STATE_DIM;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(-f * dt));
        m.view_mut((0, n), (n, n)).copy_from(&(q * dt));
        m.view_mut((n, n), (n, n)).copy_from(&(f.transpose() * dt));
        let e = m.exp();
        let phi: Mat11 = e.view((n, n), (n, n)).transpose().fixed_view::<STATE_DIM, STATE_DIM>(0, 0).into_owned();
        let upper: Mat11 = e.view((0, n), (n, n)).fixed_view::<STATE_DIM, STATE_DIM>(0, 0).into_owned();
        let qd = phi * upper;
        let qd = (qd + qd.transpose()) * 0.5;
        self.cache.insert(dt.to_bits(), (phi, qd));
        (phi, qd)
    }

    /// Propagates the state to `to`.
    pub fn predict(&mut self, state: &FilterState, to: &GnssTime) -> Result<FilterState, SolverError> {
        let dt = *to - state.time;
        if dt < 0.0 {
            return Err(SolverError::TimeReversal {
                from: state.time,
                to: *to,
            });
        }
        if dt > self.cfg.max_gap {
            return Err(SolverError::GapTooLarge { gap: dt });
        }
        if dt == 0.0 {
            return Ok(state.clone());
        }
        let (phi, qd) = self.transition(dt);
        let p = phi * state.p * phi.transpose() + qd;
        Ok(FilterState {
            x: phi * state.x,
            p: (p + p.transpose()) * 0.5,
            time: *to,
        })
    }

    /// Sequential scalar updates, pseudorange then rate for each satellite,
    /// all linearized at the incoming (predicted) state.
    pub fn update(&self, state: &FilterState, meas: &[ProcessedMeasurement]) -> (FilterState, UpdateReport) {
        let lin = state.x;
        let mut x = state.x;
        let mut p = state.p;
        let mut report = UpdateReport::default();
        let rx = lin.fixed_rows::<3>(POS).into_owned();
        let v = lin.fixed_rows::<3>(VEL).into_owned();

        for m in meas {
            let s = m.sat_state.position.0;
            let d = s - rx;
            let rho = d.norm();
            let u = d / rho;
            let glo = if m.sat.is_glonass() { 1.0 } else { 0.0 };

            let mut h = Vec11::zeros();
            h.fixed_rows_mut::<3>(POS).copy_from(&(-u));
            h[CB] = 1.0;
            h[GB] = glo;
            let pred = rho + lin[CB] + glo * lin[GB];
            let inn = self.scalar_update(&mut x, &mut p, &lin, &h, pred, m.range_observable(), 1.0 / m.weight);
            report.push(m.sat, ObservationKind::Pseudorange, inn);

            if let Some(rate) = m.pseudorange_rate {
                let vs = m.sat_state.velocity;
                let b = u.dot(&(OMEGA_EARTH * Vector3::new(s.y, -s.x, 0.0) - vs));
                let k = 1.0 - b / SPEED_OF_LIGHT;
                let rel = vs - v;
                let pred = (u.dot(&rel) + lin[CD]) / k;
                let mut h = Vec11::zeros();
                let dp = -(rel - u * u.dot(&rel)) / (rho * k);
                h.fixed_rows_mut::<3>(POS).copy_from(&dp);
                h.fixed_rows_mut::<3>(VEL).copy_from(&(-u / k));
                h[CD] = 1.0 / k;
                let r = self.cfg.rate_sigma.powi(2);
                let inn = self.scalar_update(&mut x, &mut p, &lin, &h, pred, rate, r);
                report.push(m.sat, ObservationKind::Rate, inn);
            }
        }
        report.all_gated = report.applied == 0 && !report.innovations.is_empty();
        let p = (p + p.transpose()) * 0.5;
        (FilterState { x, p, time: state.time }, report)
    }

    #[allow(clippy::too_many_arguments)]
    fn scalar_update(
        &self,
        x: &mut Vec11,
        p: &mut Mat11,
        lin: &Vec11,
        h: &Vec11,
        pred_at_lin: f64,
        z: f64,
        r: f64,
    ) -> (f64, f64, bool) {
        let pred = pred_at_lin + h.dot(&(*x - lin));
        let nu = z - pred;
        let ph = *p * h;
        let s = h.dot(&ph) + r;
        if nu * nu > self.cfg.gate_sigma.powi(2) * s {
            return (nu, s, true);
        }
        let k = ph / s;
        *x += k * nu;
        let ikh = Mat11::identity() - k * h.transpose();
        *p = ikh * *p * ikh.transpose() + k * k.transpose() * r;
        (nu, s, false)
    }
}

impl UpdateReport {
    fn push(&mut self, sat: SatId, kind: ObservationKind, (innovation, variance, gated): (f64, f64, bool)) {
        if gated {
            self.gated += 1;
        } else {
            self.applied += 1;
        }
        self.innovations.push(Innovation {
            sat,
            kind,
            innovation,
            variance,
            gated,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{geodetic_to_ecef, GeodeticPosition};
    use crate::testkit::{sky_positions, synthetic_measurement};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn start() -> (KalmanFilter, FilterState) {
        let mut kf = KalmanFilter::new(FilterConfig::default());
        let pos = geodetic_to_ecef(&GeodeticPosition::new(37.0, -122.0, 10.0));
        let fix = PvtSolution {
            time: GnssTime::new(2035, 1000.0).unwrap(),
            position: pos,
            velocity: Vector3::new(10.0, 0.0, 0.0),
            velocity_valid: true,
            clock_bias: 100.0,
            clock_drift: 0.5,
            glonass_bias: 0.0,
            covariance: DMatrix::identity(4, 4) * 4.0,
            dop: Default::default(),
            n_sats_used: 8,
            residuals: vec![],
        };
        let s = kf.init_from_fix(&fix);
        (kf, s)
    }

    #[test]
    fn zero_step_is_identity() {
        let (mut kf, s) = start();
        assert_eq!(kf.predict(&s, &s.time).unwrap(), s);
    }

    #[test]
    fn deterministic_kinematics_without_noise() {
        let cfg = FilterConfig {
            accel_sigma: 0.0,
            vertical_accel_sigma: 0.0,
            clock_bias_psd: 0.0,
            clock_drift_psd: 0.0,
            glonass_bias_psd: 0.0,
            ..Default::default()
        };
        let (_, s) = start();
        let mut kf = KalmanFilter::new(cfg);
        let p = kf.predict(&s, &s.time.add_seconds(1.0)).unwrap();
        assert!((p.position().0 - s.position().0 - Vector3::new(10.0, 0.0, 0.0)).norm() < 1e-9);
        assert!((p.clock_bias() - 100.5).abs() < 1e-12);
    }

    #[test]
    fn semigroup() {
        let (mut kf, s) = start();
        let mut a = s.clone();
        for k in 1..=10 {
            a = kf.predict(&a, &s.time.add_seconds(0.2 * k as f64)).unwrap();
        }
        let b = kf.predict(&s, &a.time).unwrap();
        let scale = b.p.abs().max();
        assert!((a.p - b.p).abs().max() < 1e-9 * scale);
        assert!((a.x - b.x).abs().max() < 1e-9 * b.x.abs().max());
    }

    #[test]
    fn time_reversal_and_gap() {
        let (mut kf, s) = start();
        assert!(matches!(
            kf.predict(&s, &s.time.add_seconds(-0.1)),
            Err(SolverError::TimeReversal { .. })
        ));
        assert!(matches!(
            kf.predict(&s, &s.time.add_seconds(2.5)),
            Err(SolverError::GapTooLarge { .. })
        ));
    }

    #[test]
    fn exact_measurement_leaves_mean() {
        let (kf, s) = start();
        let sat = Vector3::new(1.5e7, -1.0e7, 2.0e7);
        let range = (sat - s.position().0).norm() + s.clock_bias();
        let m = synthetic_measurement(SatId::gps(1).unwrap(), sat, Vector3::zeros(), range, None);
        let (after, rep) = kf.update(&s, &[m]);
        assert_eq!(rep.applied, 1);
        assert!(rep.innovations[0].innovation.abs() < 1e-6);
        assert!((after.x - s.x).abs().max() < 1e-6);
    }

    #[test]
    fn outlier_is_gated() {
        let (kf, s) = start();
        let sat = Vector3::new(1.5e7, -1.0e7, 2.0e7);
        let range = (sat - s.position().0).norm() + s.clock_bias();
        // innovation sigma is about sqrt(4 + 4 + 1) m
        let m = synthetic_measurement(SatId::gps(1).unwrap(), sat, Vector3::zeros(), range + 300.0, None);
        let (after, rep) = kf.update(&s, &[m]);
        assert!(rep.all_gated);
        assert_eq!(after, s);
    }

    #[test]
    fn covariance_stays_psd_and_innovations_are_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 2.0).unwrap();
        let rate_noise = Normal::new(0.0, 0.1).unwrap();
        let (mut kf, mut s) = start();
        let truth0 = s.position().0;
        let vel = Vector3::new(10.0, 0.0, 0.0);
        let sats = sky_positions(&mut rng, &truth0, 8);
        let mut normalized = Vec::new();
        for k in 1..=10_000 {
            let t = s.time.add_seconds(0.1);
            let dt_total = t - GnssTime::new(2035, 1000.0).unwrap();
            let rx = truth0 + vel * dt_total;
            let cb = 100.0 + 0.5 * dt_total;
            s = kf.predict(&s, &t).unwrap();
            let meas: Vec<_> = sats
                .iter()
                .enumerate()
                .map(|(i, sp)| {
                    let u = (sp - rx).normalize();
                    let b = u.dot(&(OMEGA_EARTH * Vector3::new(sp.y, -sp.x, 0.0)));
                    let rate = (u.dot(&(-vel)) + 0.5) / (1.0 - b / SPEED_OF_LIGHT);
                    let mut m = synthetic_measurement(
                        SatId::gps(i as u8 + 1).unwrap(),
                        *sp,
                        Vector3::zeros(),
                        (sp - rx).norm() + cb + noise.sample(&mut rng),
                        Some(rate + rate_noise.sample(&mut rng)),
                    );
                    m.weight = 0.25;
                    m
                })
                .collect();
            let (next, rep) = kf.update(&s, &meas);
            let min_eig = next.p.symmetric_eigenvalues().min();
            assert!(min_eig > -1e-9, "cycle {k}: {min_eig}");
            if k > 100 {
                normalized.extend(
                    rep.innovations
                        .iter()
                        .filter(|i| i.kind == ObservationKind::Pseudorange)
                        .map(|i| i.innovation / i.variance.sqrt()),
                );
            }
            s = next;
        }
        let n = normalized.len() as f64;
        let mean = normalized.iter().sum::<f64>() / n;
        let var = normalized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.8..=1.2).contains(&var), "normalized innovation variance {var}");
    }
}
