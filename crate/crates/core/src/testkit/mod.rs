//! Synthetic scene generators and the independent oracles the test suites
//! check the main path against.

pub mod drive;
pub mod features;
pub mod oracles;
pub mod scene;

pub use drive::{generate_drives, Road, SyntheticDrive, SyntheticScene};
pub use scene::{SceneConfig, SceneError};

use nalgebra::Vector3;
use rand::Rng;

use crate::ephemeris::{GlonassEphemeris, KeplerEphemeris, SatId, SatState};
use crate::frames::{EcefPosition, GnssTime};
use crate::measurements::{ProcessedMeasurement, RawGnssRecord};

/// A realistic GPS broadcast record (week 2035). Every value carries at
/// most 13 significant digits so it survives a RINEX write/parse exactly.
pub fn sample_gps_ephemeris() -> KeplerEphemeris {
    KeplerEphemeris {
        toe: GnssTime::new(2035, 7920.0).expect("valid time"),
        toc: GnssTime::new(2035, 7200.0).expect("valid time"),
        sqrt_a: 5.153644981384e+03,
        e: 5.324135953560e-03,
        i0: 9.574551475435e-01,
        omega0: -1.587452363434e+00,
        omega: 6.652127458270e-01,
        m0: 1.053214210001e+00,
        delta_n: 4.553403084576e-09,
        idot: -4.257320165090e-10,
        omega_dot: -8.047478336785e-09,
        cuc: -1.941621303558e-06,
        cus: 8.046627044678e-06,
        crc: 2.268437500000e+02,
        crs: -3.981250000000e+01,
        cic: 1.303851604462e-07,
        cis: -7.264316082001e-08,
        af0: 1.234000000000e-05,
        af1: -1.364242052659e-12,
        af2: 0.0,
        tgd: -1.071020960808e-08,
        iode: 41.0,
        iodc: 41.0,
        codes_l2: 1.0,
        l2p_flag: 0.0,
        ura: 2.0,
        health: 0.0,
        transmit_tow: 720.0,
        fit_interval: 4.0,
    }
}

/// A realistic GLONASS broadcast record, channel +5, reference epoch
/// 01:45:00 UTC on 2019-01-06.
pub fn sample_glonass_ephemeris() -> GlonassEphemeris {
    GlonassEphemeris {
        tb: GnssTime::new(2035, 6318.0).expect("valid time"),
        position: Vector3::new(-1.241562402344e4, -9.180844726562e3, 2.088094531250e4) * 1e3,
        velocity: Vector3::new(2.026557922363, -2.204545974731, -3.143310546875e-1) * 1e3,
        acceleration: Vector3::new(0.0, 1.862645149231e-9, -2.793967723846e-9) * 1e3,
        tau_n: -2.812128514051e-05,
        gamma_n: 0.0,
        freq_channel: 5,
        health: 0.0,
        age: 0.0,
        frame_time: 6.3e3,
    }
}

/// A processed measurement with the given satellite state and observables,
/// no clocks or atmosphere, unit weight, at week 2035 tow 1000.
pub fn synthetic_measurement(
    sat: SatId,
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    range_observable: f64,
    rate: Option<f64>,
) -> ProcessedMeasurement {
    let time = GnssTime::new(2035, 1000.0).expect("valid time");
    ProcessedMeasurement {
        sat,
        time,
        transmit_time: time,
        flight_time: 0.07,
        sat_state: SatState {
            position: EcefPosition(position),
            velocity,
            clock_bias: 0.0,
            clock_drift: 0.0,
        },
        corrected_pseudorange: range_observable,
        pseudorange_rate: rate,
        iono_delay: 0.0,
        tropo_delay: 0.0,
        weight: 1.0,
        azimuth: 0.0,
        elevation: 1.0,
        record: RawGnssRecord {
            time,
            sat,
            pseudorange: Some(range_observable),
            doppler: None,
            carrier_phase: None,
            cn0: Some(45.0),
            pr_std: None,
        },
    }
}

/// `n` points on a 26,560 km sphere more than ~11.5 deg above the
/// horizon of `rx`.
pub fn sky_positions(rng: &mut impl Rng, rx: &Vector3<f64>, n: usize) -> Vec<Vector3<f64>> {
    let up = rx.normalize();
    let mut out = Vec::new();
    while out.len() < n {
        let d = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if d.norm() > 1.0 || d.norm() < 0.1 {
            continue;
        }
        let s = d.normalize() * 2.656e7;
        if (s - rx).normalize().dot(&up) > 0.2 {
            out.push(s);
        }
    }
    out
}
