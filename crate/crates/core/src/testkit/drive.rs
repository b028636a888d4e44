//! Synthetic GNSS drives: a GPS-like constellation, straight constant-velocity
//! receiver trajectories and the raw observables they produce.
//!
//! The forward model solves the emission constraint itself and shares only
//! the atmospheric delay and look-angle functions with `measurements`.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{SceneConfig, SceneError};
use crate::ephemeris::{
    gps_sat_state, parse_rinex_nav, write_rinex_nav, IonoParams, KeplerEphemeris, NavRecord, SatId, SatState,
    OMEGA_EARTH, SPEED_OF_LIGHT,
};
use crate::frames::{
    ecef_to_geodetic, ned_rotation_at, write_pose_csv, EcefPosition, GeodeticPosition, GlobalPose, GnssTime,
    TangentPlane,
};
use crate::measurements::{klobuchar_delay, look_angles, saastamoinen_delay, write_raw_records, RawGnssRecord};

const LEAP_SECONDS: f64 = 18.0;
const NOMINAL_SQRT_A: f64 = 5153.7;

/// Ionosphere coefficients typical of a quiet mid-latitude day.
pub fn typical_iono() -> IonoParams {
    IonoParams {
        alpha: [1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8],
        beta: [90112.0, 0.0, -196608.0, -65536.0],
    }
}

/// Atmospheric terms included in the forward model.
#[derive(Clone, Copy, Debug)]
pub struct Atmosphere<'a> {
    pub iono: Option<&'a IonoParams>,
    pub troposphere: bool,
}

impl Atmosphere<'_> {
    pub const NONE: Atmosphere<'static> = Atmosphere {
        iono: None,
        troposphere: false,
    };

    fn delays(&self, rx: &EcefPosition, geo: &GeodeticPosition, sat: &EcefPosition, t: &GnssTime) -> (f64, f64) {
        let (az, el) = look_angles(geo, rx, sat);
        let iono = self.iono.map_or(0.0, |p| klobuchar_delay(p, geo, az, el, t));
        let tropo = if self.troposphere && el > 0.0 {
            saastamoinen_delay(geo, el)
        } else {
            0.0
        };
        (iono, tropo)
    }
}

/// Receiver truth at one epoch.
#[derive(Clone, Copy, Debug)]
pub struct ReceiverTruth {
    pub position: EcefPosition,
    pub velocity: Vector3<f64>,
    /// Clock offset times c [m].
    pub clock_bias: f64,
    /// [m/s]
    pub clock_drift: f64,
}

/// Noise-free observables of one satellite at one receiver epoch.
#[derive(Clone, Copy, Debug)]
pub struct Observables {
    pub pseudorange: f64,
    /// Time derivative of `pseudorange` [m/s].
    pub pseudorange_rate: f64,
    pub flight_time: f64,
    pub iono_delay: f64,
    pub tropo_delay: f64,
    /// Satellite position at emission in the reception-epoch frame.
    pub sat_position: EcefPosition,
    pub elevation: f64,
}

struct Emission {
    tau: f64,
    state: SatState,
    rotated: Vector3<f64>,
    rotated_velocity: Vector3<f64>,
    iono: f64,
    tropo: f64,
}

fn spin(theta: f64, v: &Vector3<f64>) -> Vector3<f64> {
    let (s, c) = theta.sin_cos();
    Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
}

/// Solves `c tau = |R3(w tau) s(t - tau) - rx| + b + I + T` for `tau`.
fn emission(
    eph: &KeplerEphemeris,
    t: &GnssTime,
    rx: &ReceiverTruth,
    atmosphere: &Atmosphere,
) -> Result<Emission, SceneError> {
    let geo = ecef_to_geodetic(&rx.position).map_err(|e| SceneError::Config(e.to_string()))?;
    let mut tau = 0.075;
    let mut last = None;
    for _ in 0..40 {
        let state = gps_sat_state(eph, &t.add_seconds(-tau))?;
        let rotated = spin(OMEGA_EARTH * tau, &state.position.0);
        let (iono, tropo) = atmosphere.delays(&rx.position, &geo, &EcefPosition(rotated), t);
        let next = ((rotated - rx.position.0).norm() + rx.clock_bias + iono + tropo) / SPEED_OF_LIGHT;
        let step = (next - tau).abs();
        last = Some(Emission {
            tau,
            state,
            rotated,
            rotated_velocity: spin(OMEGA_EARTH * tau, &state.velocity),
            iono,
            tropo,
        });
        if step == 0.0 || step < 1e-16 {
            break;
        }
        tau = next;
    }
    Ok(last.expect("at least one iteration"))
}

/// Forward model: pseudorange `c tau - c dt_sv(t - tau)` and its exact time
/// derivative. Atmospheric delay rates come from a central difference.
pub fn forward_observables(
    eph: &KeplerEphemeris,
    t: &GnssTime,
    rx: &ReceiverTruth,
    atmosphere: &Atmosphere,
) -> Result<Observables, SceneError> {
    let em = emission(eph, t, rx, atmosphere)?;
    let c = SPEED_OF_LIGHT;
    let los = em.rotated - rx.position.0;
    let u = los / los.norm();

    let h = 0.5;
    let delay_at = |dt: f64| -> Result<f64, SceneError> {
        let moved = ReceiverTruth {
            position: EcefPosition(rx.position.0 + rx.velocity * dt),
            clock_bias: rx.clock_bias + rx.clock_drift * dt,
            ..*rx
        };
        let e = emission(eph, &t.add_seconds(dt), &moved, atmosphere)?;
        Ok(e.iono + e.tropo)
    };
    let delay_rate = if atmosphere.iono.is_some() || atmosphere.troposphere {
        (delay_at(h)? - delay_at(-h)?) / (2.0 * h)
    } else {
        0.0
    };

    // d/dtau of the rotated position is w (y', -x', 0)
    let spin_rate = OMEGA_EARTH * Vector3::new(em.rotated.y, -em.rotated.x, 0.0);
    let b = u.dot(&(spin_rate - em.rotated_velocity));
    let tau_dot = (u.dot(&(em.rotated_velocity - rx.velocity)) + rx.clock_drift + delay_rate) / (c - b);
    let rate = c * tau_dot - c * em.state.clock_drift * (1.0 - tau_dot);

    let geo = ecef_to_geodetic(&rx.position).map_err(|e| SceneError::Config(e.to_string()))?;
    let (_, el) = look_angles(&geo, &rx.position, &EcefPosition(em.rotated));
    Ok(Observables {
        pseudorange: c * em.tau - c * em.state.clock_bias,
        pseudorange_rate: rate,
        flight_time: em.tau,
        iono_delay: em.iono,
        tropo_delay: em.tropo,
        sat_position: EcefPosition(em.rotated),
        elevation: el,
    })
}

fn wrap(angle: f64) -> f64 {
    (angle + PI).rem_euclid(TAU) - PI
}

/// Broadcast-like orbits: `n` satellites in six planes at 55 deg, with
/// small random harmonic and clock terms. Elements pass through a RINEX
/// write/parse so they carry exactly what a navigation file can hold.
pub fn generate_constellation(
    rng: &mut impl Rng,
    n: usize,
    toe: GnssTime,
    iono: &IonoParams,
) -> Result<Vec<NavRecord>, SceneError> {
    let planes = 6;
    let per_plane = n.div_ceil(planes);
    let mut records = Vec::with_capacity(n);
    for k in 0..n {
        let plane = k % planes;
        let slot = k / planes;
        let omega = rng.random_range(-PI..PI);
        let latitude = TAU * slot as f64 / per_plane as f64 + plane as f64 * PI / 12.0;
        let eph = KeplerEphemeris {
            toe,
            toc: toe,
            sqrt_a: NOMINAL_SQRT_A + rng.random_range(-2.0..2.0),
            e: rng.random_range(0.001..0.02),
            i0: 55f64.to_radians() + rng.random_range(-0.01..0.01),
            omega0: wrap(plane as f64 * PI / 3.0 + rng.random_range(-0.02..0.02)),
            omega,
            m0: wrap(latitude - omega),
            delta_n: rng.random_range(4e-9..5e-9),
            idot: rng.random_range(-5e-10..5e-10),
            omega_dot: rng.random_range(-8.5e-9..-7.5e-9),
            cuc: rng.random_range(-1e-5..1e-5),
            cus: rng.random_range(-1e-5..1e-5),
            crc: rng.random_range(-300.0..300.0),
            crs: rng.random_range(-100.0..100.0),
            cic: rng.random_range(-2e-7..2e-7),
            cis: rng.random_range(-2e-7..2e-7),
            af0: rng.random_range(-2e-4..2e-4),
            af1: rng.random_range(-1e-11..1e-11),
            af2: 0.0,
            tgd: rng.random_range(-1e-8..0.0),
            iode: rng.random_range(1..=255) as f64,
            iodc: 0.0,
            codes_l2: 1.0,
            l2p_flag: 0.0,
            ura: 2.0,
            health: 0.0,
            transmit_tow: (toe.tow() - 1800.0).max(0.0),
            fit_interval: 4.0,
        };
        let sat = SatId::gps(k as u8 + 1)?;
        records.push(NavRecord::Gps(sat, KeplerEphemeris { iodc: eph.iode, ..eph }));
    }
    let text = write_rinex_nav(&records, Some(iono), LEAP_SECONDS);
    Ok(parse_rinex_nav(text.as_bytes())?.records)
}

/// One receiver drive: observations plus the truth behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDrive {
    pub records: Vec<RawGnssRecord>,
    pub truth: Vec<GlobalPose>,
    /// True receiver clock offset per epoch [m].
    pub clock_bias: Vec<f64>,
}

impl SyntheticDrive {
    pub fn raw_csv(&self) -> String {
        write_raw_records(&self.records)
    }

    pub fn truth_csv(&self) -> String {
        let mut out = Vec::new();
        write_pose_csv(&mut out, &self.truth).expect("writing to memory");
        String::from_utf8(out).expect("pose CSV is ASCII")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub nav: Vec<NavRecord>,
    pub iono: IonoParams,
    pub drives: Vec<SyntheticDrive>,
}

impl SyntheticScene {
    pub fn nav_text(&self) -> String {
        write_rinex_nav(&self.nav, Some(&self.iono), LEAP_SECONDS)
    }
}

/// Road geometry shared by every drive of a scene.
#[derive(Clone, Copy, Debug)]
pub struct Road {
    pub plane: TangentPlane,
    /// Unit direction of travel in ECEF.
    pub direction: Vector3<f64>,
    /// Vehicle orientation: forward along the road, down along the local vertical.
    pub orientation: crate::frames::Quaternion,
}

impl Road {
    pub fn of(cfg: &SceneConfig) -> Self {
        let start = GeodeticPosition::new(cfg.lat_deg, cfg.lon_deg, cfg.height_m);
        let plane = TangentPlane::at(&start);
        let h = cfg.heading_deg.to_radians();
        let ned = Vector3::new(h.cos(), h.sin(), 0.0);
        let yaw = nalgebra::UnitQuaternion::from_scaled_axis(Vector3::new(0.0, 0.0, h));
        Self {
            plane,
            direction: plane.rotation.transpose() * ned,
            orientation: yaw.inverse() * ned_rotation_at(&start),
        }
    }

    /// Point `along` meters down the road, `right` meters to its right and
    /// `down` meters below the start height.
    pub fn point(&self, along: f64, right: f64, down: f64) -> EcefPosition {
        let r = self.plane.rotation;
        let forward = r * self.direction;
        let right_ned = Vector3::new(-forward.y, forward.x, 0.0);
        self.plane.from_ned(&(forward * along + right_ned * right + Vector3::new(0.0, 0.0, down)))
    }
}

fn drive_start(cfg: &SceneConfig, drive: usize) -> Result<GnssTime, SceneError> {
    GnssTime::new(cfg.week as i64, cfg.start_tow + cfg.drive_spacing_s * drive as f64)
        .map_err(|e| SceneError::Config(e.to_string()))
}

fn epoch_time(start: &GnssTime, cfg: &SceneConfig, i: usize) -> GnssTime {
    start.add_seconds(i as f64 / cfg.rate_hz)
}

/// Satellites above the cutoff at every check time of every drive, by PRN.
fn visible_satellites(cfg: &SceneConfig, road: &Road, nav: &[NavRecord]) -> Result<Vec<usize>, SceneError> {
    let cutoff = cfg.elevation_cutoff_deg.to_radians();
    let mut keep = Vec::new();
    'sat: for (k, rec) in nav.iter().enumerate() {
        let NavRecord::Gps(_, eph) = rec else { continue };
        for d in 0..cfg.drives {
            let start = drive_start(cfg, d)?;
            let mut s = 0.0f64;
            loop {
                let t = start.add_seconds(s.min(cfg.duration_s));
                let rx = road.point(cfg.speed_mps * s.min(cfg.duration_s), 0.0, 0.0);
                let geo = ecef_to_geodetic(&rx).map_err(|e| SceneError::Config(e.to_string()))?;
                let sat = gps_sat_state(eph, &t)?;
                if look_angles(&geo, &rx, &sat.position).1 < cutoff {
                    continue 'sat;
                }
                if s >= cfg.duration_s {
                    break;
                }
                s += 10.0;
            }
        }
        keep.push(k);
    }
    Ok(keep)
}

/// Generates the navigation data and every drive of the scene.
pub fn generate_drives(cfg: &SceneConfig) -> Result<SyntheticScene, SceneError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = cfg.drive_spacing_s * (cfg.drives - 1) as f64 + cfg.duration_s;
    let toe = GnssTime::new(cfg.week as i64, (cfg.start_tow + span / 2.0).round())
        .map_err(|e| SceneError::Config(e.to_string()))?;
    // the ionosphere coefficients also go through the file format
    let iono_text = write_rinex_nav(&[], Some(&typical_iono()), LEAP_SECONDS);
    let iono = parse_rinex_nav(iono_text.as_bytes())?.iono.expect("iono written");
    let nav = generate_constellation(&mut rng, cfg.satellites, toe, &iono)?;
    let road = Road::of(cfg);
    let visible = visible_satellites(cfg, &road, &nav)?;
    if visible.len() < 5 {
        return Err(SceneError::TooFewSatellites {
            visible: visible.len(),
            cutoff_deg: cfg.elevation_cutoff_deg,
        });
    }
    let atmosphere = Atmosphere {
        iono: cfg.ionosphere.then_some(&iono),
        troposphere: cfg.troposphere,
    };
    let drives = (0..cfg.drives)
        .map(|d| generate_one(cfg, d, &road, &nav, &visible, &atmosphere))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SyntheticScene {
        config: cfg.clone(),
        nav,
        iono,
        drives,
    })
}

fn generate_one(
    cfg: &SceneConfig,
    drive: usize,
    road: &Road,
    nav: &[NavRecord],
    visible: &[usize],
    atmosphere: &Atmosphere,
) -> Result<SyntheticDrive, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(drive as u64 + 1);
    let start = drive_start(cfg, drive)?;
    let pr_noise = Normal::new(0.0, cfg.pseudorange_sigma_m).expect("finite sigma");
    let dop_noise = Normal::new(0.0, cfg.doppler_sigma_hz).expect("finite sigma");
    let bias0 = if cfg.clock_bias_m > 0.0 {
        rng.random_range(-cfg.clock_bias_m..cfg.clock_bias_m)
    } else {
        0.0
    };
    let ambiguity: Vec<f64> = visible.iter().map(|_| rng.random_range(-1_000_000..1_000_000) as f64).collect();
    let pr_std = if cfg.pseudorange_sigma_m > 0.0 {
        cfg.pseudorange_sigma_m
    } else {
        1.0
    };

    let n = cfg.epochs();
    let mut records = Vec::with_capacity(n * visible.len());
    let mut truth = Vec::with_capacity(n);
    let mut clock = Vec::with_capacity(n);
    for i in 0..n {
        let t = epoch_time(&start, cfg, i);
        let elapsed = t - start;
        let rx = ReceiverTruth {
            position: road.point(cfg.speed_mps * elapsed, 0.0, 0.0),
            velocity: road.direction * cfg.speed_mps,
            clock_bias: bias0 + cfg.clock_drift_mps * elapsed,
            clock_drift: cfg.clock_drift_mps,
        };
        truth.push(GlobalPose::new(t, rx.position, road.orientation));
        clock.push(rx.clock_bias);
        for (j, &k) in visible.iter().enumerate() {
            let NavRecord::Gps(sat, eph) = &nav[k] else { continue };
            let obs = forward_observables(eph, &t, &rx, atmosphere)?;
            let wavelength = sat.l1_wavelength();
            let cn0 = (10.0 * (30.0 + 20.0 * obs.elevation.sin())).round() / 10.0;
            records.push(RawGnssRecord {
                time: t,
                sat: *sat,
                pseudorange: Some(obs.pseudorange + pr_noise.sample(&mut rng)),
                doppler: Some(-obs.pseudorange_rate / wavelength + dop_noise.sample(&mut rng)),
                carrier_phase: Some((obs.pseudorange - 2.0 * obs.iono_delay) / wavelength + ambiguity[j]),
                cn0: Some(cn0),
                pr_std: Some(pr_std),
            });
        }
    }
    Ok(SyntheticDrive {
        records,
        truth,
        clock_bias: clock,
    })
}
