use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::corrections::{klobuchar_delay, look_angles, saastamoinen_delay, weight_of};
use super::{Epoch, MeasurementError, RawGnssRecord};
use crate::ephemeris::{
    EphemerisError, EphemerisStore, IonoParams, SatId, SatState, OMEGA_EARTH, SPEED_OF_LIGHT,
};
use crate::frames::{ecef_to_geodetic, EcefPosition, GnssTime};

const FLIGHT_TIME_TOL: f64 = 1e-10;
const FLIGHT_TIME_MAX_ITER: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementConfig {
    pub elevation_mask_deg: f64,
    pub cn0_floor: f64,
    /// Pseudorange sigma at 45 dB-Hz and zenith [m].
    pub sigma0: f64,
    pub ionosphere: bool,
    pub troposphere: bool,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            elevation_mask_deg: 10.0,
            cn0_floor: 20.0,
            sigma0: 1.0,
            ionosphere: true,
            troposphere: true,
        }
    }
}

impl MeasurementConfig {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..90.0).contains(&self.elevation_mask_deg) {
            return Err(format!("elevation mask {} deg outside [0, 90)", self.elevation_mask_deg));
        }
        if !(0.0..=64.0).contains(&self.cn0_floor) {
            return Err(format!("C/N0 floor {} outside [0, 64]", self.cn0_floor));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err("sigma0 must be positive".into());
        }
        Ok(())
    }
}

/// Signal emission time and satellite state for one observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransmitSolution {
    /// Signal flight time `tau` [s], clock-corrected.
    pub flight_time: f64,
    pub transmit_time: GnssTime,
    /// State at emission in the ECEF frame of the emission epoch.
    pub state: SatState,
    /// Same state expressed in the ECEF frame of the reception epoch.
    pub rotated: SatState,
}

fn rotate_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Expresses an emission-epoch satellite state in the ECEF frame `tau`
/// seconds later (the Earth turns by `OMEGA_EARTH * tau` meanwhile).
pub fn earth_rotation(state: &SatState, tau: f64) -> SatState {
    let r = rotate_z(OMEGA_EARTH * tau);
    SatState {
        position: EcefPosition(r * state.position.0),
        velocity: r * state.velocity,
        ..*state
    }
}

/// Solves `tau = (pr + c dt_sv(t_rx - tau)) / c` by fixed-point iteration,
/// starting from `pr / c`.
pub fn solve_transmit_time<F>(
    sat: SatId,
    t_rx: &GnssTime,
    pseudorange: f64,
    state_at: F,
) -> Result<TransmitSolution, MeasurementError>
where
    F: Fn(&GnssTime) -> Result<SatState, EphemerisError>,
{
    let mut tau = pseudorange / SPEED_OF_LIGHT;
    for _ in 0..FLIGHT_TIME_MAX_ITER {
        let t_tx = t_rx.add_seconds(-tau);
        let state = state_at(&t_tx).map_err(|e| MeasurementError::from_ephemeris(sat, e))?;
        let next = (pseudorange + SPEED_OF_LIGHT * state.clock_bias) / SPEED_OF_LIGHT;
        let done = (next - tau).abs() < FLIGHT_TIME_TOL;
        tau = next;
        if done {
            let transmit_time = t_rx.add_seconds(-tau);
            let state = state_at(&transmit_time).map_err(|e| MeasurementError::from_ephemeris(sat, e))?;
            return Ok(TransmitSolution {
                flight_time: tau,
                transmit_time,
                state,
                rotated: earth_rotation(&state, tau),
            });
        }
    }
    Err(MeasurementError::NoConvergence(sat))
}

/// One observation after the satellite-side and receiver-side corrections.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedMeasurement {
    pub sat: SatId,
    /// Receiver epoch.
    pub time: GnssTime,
    pub transmit_time: GnssTime,
    pub flight_time: f64,
    /// Satellite state at emission, in the ECEF frame of the receiver epoch.
    pub sat_state: SatState,
    /// Pseudorange plus satellite clock offset [m].
    pub corrected_pseudorange: f64,
    /// `-doppler * wavelength` plus satellite clock drift [m/s].
    pub pseudorange_rate: Option<f64>,
    pub iono_delay: f64,
    pub tropo_delay: f64,
    /// [1/m^2]
    pub weight: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub record: RawGnssRecord,
}

impl ProcessedMeasurement {
    /// Geometric range plus receiver clock, as implied by the observation.
    pub fn range_observable(&self) -> f64 {
        self.corrected_pseudorange - self.iono_delay - self.tropo_delay
    }
}

/// Satellite-side processing of one record. Receiver-dependent fields are
/// left at zenith defaults (no atmosphere, elevation 90 deg) until
/// [`apply_receiver_corrections`] runs.
pub fn prepare_measurement(
    record: &RawGnssRecord,
    store: &EphemerisStore,
    cfg: &MeasurementConfig,
) -> Result<ProcessedMeasurement, MeasurementError> {
    let sat = record.sat;
    let pr = record.pseudorange.ok_or(MeasurementError::MissingPseudorange(sat))?;
    if let Some(cn0) = record.cn0 {
        if cn0 < cfg.cn0_floor {
            return Err(MeasurementError::WeakSignal { sat, cn0 });
        }
    }
    let zenith = std::f64::consts::FRAC_PI_2;
    let weight =
        weight_of(record.pr_std, record.cn0, zenith, cfg.sigma0).ok_or(MeasurementError::NoWeight(sat))?;
    let tx = solve_transmit_time(sat, &record.time, pr, |t| store.sat_state(&sat, t))?;
    let rate = record
        .doppler
        .map(|d| -d * sat.l1_wavelength() + SPEED_OF_LIGHT * tx.state.clock_drift);
    Ok(ProcessedMeasurement {
        sat,
        time: record.time,
        transmit_time: tx.transmit_time,
        flight_time: tx.flight_time,
        sat_state: tx.rotated,
        corrected_pseudorange: pr + SPEED_OF_LIGHT * tx.state.clock_bias,
        pseudorange_rate: rate,
        iono_delay: 0.0,
        tropo_delay: 0.0,
        weight,
        azimuth: 0.0,
        elevation: zenith,
        record: record.clone(),
    })
}

/// Prepares every record of an epoch; failures are returned alongside.
pub fn prepare_epoch(
    epoch: &Epoch,
    store: &EphemerisStore,
    cfg: &MeasurementConfig,
) -> (Vec<ProcessedMeasurement>, Vec<MeasurementError>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in &epoch.records {
        match prepare_measurement(r, store, cfg) {
            Ok(m) => ok.push(m),
            Err(e) => failed.push(e),
        }
    }
    (ok, failed)
}

/// Look angles, atmospheric delays and weight for a receiver at `rx`.
pub fn apply_receiver_corrections(
    m: &ProcessedMeasurement,
    rx: &EcefPosition,
    iono: Option<&IonoParams>,
    cfg: &MeasurementConfig,
) -> Result<ProcessedMeasurement, MeasurementError> {
    let sat = m.sat;
    // receivers near the geocenter have no meaningful horizon
    let Ok(geo) = ecef_to_geodetic(rx) else {
        return Ok(m.clone());
    };
    let (az, el) = look_angles(&geo, rx, &m.sat_state.position);
    if el < cfg.elevation_mask_deg.to_radians() {
        return Err(MeasurementError::BelowElevationMask {
            sat,
            elevation_deg: el.to_degrees(),
        });
    }
    let weight = weight_of(m.record.pr_std, m.record.cn0, el, cfg.sigma0)
        .ok_or(MeasurementError::NoWeight(sat))?;
    let iono_delay = match iono {
        Some(p) if cfg.ionosphere => klobuchar_delay(p, &geo, az, el, &m.time),
        _ => 0.0,
    };
    let tropo_delay = if cfg.troposphere && el > 0.0 {
        saastamoinen_delay(&geo, el)
    } else {
        0.0
    };
    Ok(ProcessedMeasurement {
        iono_delay,
        tropo_delay,
        weight,
        azimuth: az,
        elevation: el,
        ..m.clone()
    })
}
