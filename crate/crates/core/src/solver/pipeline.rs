//! File-level driver: raw observations plus navigation data in, fixes out.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kf::{FilterState, KalmanFilter};
use super::{dop_of, geometry_matrix, wls_solve, FilterConfig, Fix, PvtSolution, SolveMode, SolverError, WlsConfig};
use crate::ephemeris::{parse_rinex_nav_with_leap, read_nav_file, EphemerisError, EphemerisStore, IonoParams};
use crate::frames::{ecef_to_geodetic, EcefPosition, DEFAULT_LEAP_SECONDS};
use crate::measurements::{
    apply_receiver_corrections, parse_raw_records, prepare_epoch, MeasurementConfig, MeasurementError,
    ProcessedMeasurement, RawLog,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub mode: SolveMode,
    pub measurement: MeasurementConfig,
    pub wls: WlsConfig,
    pub filter: FilterConfig,
    /// Passes of correct-then-solve per least-squares fix.
    pub correction_passes: usize,
    /// UTC to GPS offset used when a navigation file has no LEAP SECONDS line.
    pub leap_seconds: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            mode: SolveMode::Wls,
            measurement: MeasurementConfig::default(),
            wls: WlsConfig::default(),
            filter: FilterConfig::default(),
            correction_passes: 5,
            leap_seconds: DEFAULT_LEAP_SECONDS,
        }
    }
}

/// Per-run counters, serialized as the JSON run report.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub epochs: usize,
    pub fixes: usize,
    pub raw_malformed: usize,
    pub raw_out_of_order: usize,
    /// Rejected measurements by reason.
    pub measurement_rejections: BTreeMap<String, usize>,
    /// Failed epochs by reason.
    pub epoch_failures: BTreeMap<String, usize>,
    pub filter_resets: usize,
    pub gated_observations: usize,
    pub all_gated_epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutput {
    pub fixes: Vec<Fix>,
    pub report: RunReport,
}

#[derive(Debug, Error)]
pub enum SolveFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Raw { path: PathBuf, source: MeasurementError },
    #[error("{path}: {source}")]
    Nav { path: PathBuf, source: EphemerisError },
    #[error("no usable ephemeris records in the navigation input")]
    NoEphemeris,
}

fn reason(e: &MeasurementError) -> &'static str {
    match e {
        MeasurementError::MalformedRecord { .. } => "malformed",
        MeasurementError::OutOfOrder { .. } => "out_of_order",
        MeasurementError::HeaderMissing => "header_missing",
        MeasurementError::NoEphemeris(_) => "no_ephemeris",
        MeasurementError::NoConvergence(_) => "no_convergence",
        MeasurementError::Ephemeris { .. } => "ephemeris",
        MeasurementError::MissingPseudorange(_) => "missing_pseudorange",
        MeasurementError::NoWeight(_) => "no_weight",
        MeasurementError::WeakSignal { .. } => "weak_signal",
        MeasurementError::BelowElevationMask { .. } => "below_elevation_mask",
    }
}

fn solver_reason(e: &SolverError) -> &'static str {
    match e {
        SolverError::Underdetermined { .. } => "underdetermined",
        SolverError::SingularGeometry { .. } => "singular_geometry",
        SolverError::NoConvergence { .. } => "no_convergence",
        SolverError::TimeReversal { .. } => "time_reversal",
        SolverError::GapTooLarge { .. } => "gap_too_large",
        SolverError::NotInitialized => "not_initialized",
        SolverError::Input(_) => "input",
    }
}

struct Context<'a> {
    iono: Option<&'a IonoParams>,
    cfg: &'a SolveConfig,
}

impl Context<'_> {
    /// Applies receiver corrections at `rx`; rejections are returned separately.
    fn corrected(
        &self,
        prepared: &[ProcessedMeasurement],
        rx: &EcefPosition,
    ) -> (Vec<ProcessedMeasurement>, Vec<MeasurementError>) {
        let mut ok = Vec::with_capacity(prepared.len());
        let mut rejected = Vec::new();
        for m in prepared {
            match apply_receiver_corrections(m, rx, self.iono, &self.cfg.measurement) {
                Ok(c) => ok.push(c),
                Err(e) => rejected.push(e),
            }
        }
        (ok, rejected)
    }

    /// Alternates corrections and least squares until the position stops moving.
    fn corrected_wls(
        &self,
        prepared: &[ProcessedMeasurement],
        guess: EcefPosition,
    ) -> Result<(PvtSolution, Vec<MeasurementError>), SolverError> {
        let mut pos = guess;
        let mut result = None;
        for _ in 0..self.cfg.correction_passes.max(1) {
            let (used, rejected) = self.corrected(prepared, &pos);
            let sol = wls_solve(&used, &pos, &self.cfg.wls)?;
            let moved = sol.position.distance(&pos);
            let anchored = pos.norm() > 1e5;
            pos = sol.position;
            result = Some((sol, rejected));
            if anchored && moved < 1e-6 {
                break;
            }
        }
        Ok(result.expect("at least one pass"))
    }
}

fn fix_from_wls(sol: &PvtSolution, mode: SolveMode) -> Fix {
    Fix {
        time: sol.time,
        position: sol.position,
        velocity: sol.velocity,
        clock_bias: sol.clock_bias,
        hdop: Some(sol.dop.hdop),
        vdop: Some(sol.dop.vdop),
        n_sats: sol.n_sats_used,
        mode,
    }
}

fn fix_from_filter(state: &FilterState, used: &[ProcessedMeasurement]) -> Fix {
    let pos = state.position();
    let mixed = used.iter().any(|m| m.sat.is_glonass()) && used.iter().any(|m| !m.sat.is_glonass());
    let dop = ecef_to_geodetic(&pos)
        .ok()
        .and_then(|geo| dop_of(&geometry_matrix(used, &pos.0, mixed), &geo).ok());
    Fix {
        time: state.time,
        position: pos,
        velocity: state.velocity(),
        clock_bias: state.clock_bias(),
        hdop: dop.map(|d| d.hdop),
        vdop: dop.map(|d| d.vdop),
        n_sats: used.len(),
        mode: SolveMode::Kf,
    }
}

/// Solves every epoch of `log`. Deterministic for identical inputs.
pub fn solve_log(
    log: &RawLog,
    store: &EphemerisStore,
    iono: Option<&IonoParams>,
    cfg: &SolveConfig,
) -> SolveOutput {
    let ctx = Context { iono, cfg };
    let mut report = RunReport {
        mode: cfg.mode.as_str().to_string(),
        epochs: log.epochs.len(),
        raw_malformed: log.malformed,
        raw_out_of_order: log.out_of_order,
        ..Default::default()
    };
    let mut fixes = Vec::new();
    let mut filter = KalmanFilter::new(cfg.filter.clone());
    let mut state: Option<FilterState> = None;
    let mut all_gated_run = 0usize;
    let mut last_position = EcefPosition::new(0.0, 0.0, 0.0);

    for epoch in &log.epochs {
        let (prepared, failed) = prepare_epoch(epoch, store, &cfg.measurement);
        for e in &failed {
            *report.measurement_rejections.entry(reason(e).to_string()).or_default() += 1;
        }

        if let (SolveMode::Kf, Some(prev)) = (cfg.mode, state.as_ref()) {
            match filter.predict(prev, &epoch.time) {
                Ok(predicted) => {
                    let (used, rejected) = ctx.corrected(&prepared, &predicted.position());
                    for e in &rejected {
                        *report.measurement_rejections.entry(reason(e).to_string()).or_default() += 1;
                    }
                    let (next, upd) = filter.update(&predicted, &used);
                    report.gated_observations += upd.gated;
                    all_gated_run = if upd.all_gated { all_gated_run + 1 } else { 0 };
                    if upd.all_gated {
                        report.all_gated_epochs += 1;
                    }
                    let speed = next.velocity().norm();
                    if speed >= cfg.filter.max_speed || all_gated_run >= cfg.filter.max_all_gated {
                        log::warn!("filter reset at {} (speed {speed:.1} m/s, {all_gated_run} gated epochs)", epoch.time);
                        report.filter_resets += 1;
                        state = None;
                        all_gated_run = 0;
                    } else {
                        let applied: Vec<_> = used
                            .iter()
                            .filter(|m| {
                                upd.innovations.iter().any(|i| {
                                    i.sat == m.sat && i.kind == super::ObservationKind::Pseudorange && !i.gated
                                })
                            })
                            .cloned()
                            .collect();
                        fixes.push(fix_from_filter(&next, &applied));
                        last_position = next.position();
                        state = Some(next);
                        continue;
                    }
                }
                Err(e) => {
                    *report.epoch_failures.entry(solver_reason(&e).to_string()).or_default() += 1;
                    report.filter_resets += 1;
                    state = None;
                }
            }
        }

        match ctx.corrected_wls(&prepared, last_position) {
            Ok((sol, rejected)) => {
                for e in &rejected {
                    *report.measurement_rejections.entry(reason(e).to_string()).or_default() += 1;
                }
                last_position = sol.position;
                if cfg.mode == SolveMode::Kf {
                    let s = filter.init_from_fix(&sol);
                    fixes.push(fix_from_filter(&s, &ctx.corrected(&prepared, &sol.position).0));
                    state = Some(s);
                    all_gated_run = 0;
                } else {
                    fixes.push(fix_from_wls(&sol, SolveMode::Wls));
                }
            }
            Err(e) => {
                *report.epoch_failures.entry(solver_reason(&e).to_string()).or_default() += 1;
            }
        }
    }
    report.fixes = fixes.len();
    SolveOutput { fixes, report }
}

/// Reads a raw observation file and navigation files, then runs [`solve_log`].
/// The first navigation file carrying ionosphere coefficients supplies them.
pub fn solve_file(raw: &Path, nav: &[PathBuf], cfg: &SolveConfig) -> Result<SolveOutput, SolveFileError> {
    let bytes = std::fs::read(raw).map_err(|source| SolveFileError::Io {
        path: raw.to_path_buf(),
        source,
    })?;
    let log = parse_raw_records(&bytes).map_err(|source| SolveFileError::Raw {
        path: raw.to_path_buf(),
        source,
    })?;
    let mut store = EphemerisStore::new();
    let mut iono = None;
    for path in nav {
        let bytes = read_nav_file(path).map_err(|source| SolveFileError::Io {
            path: path.clone(),
            source,
        })?;
        let data = parse_rinex_nav_with_leap(&bytes, cfg.leap_seconds).map_err(|source| SolveFileError::Nav {
            path: path.clone(),
            source,
        })?;
        for d in &data.diagnostics {
            log::warn!("{}:{}: {}", path.display(), d.line, d.message);
        }
        if iono.is_none() {
            iono = data.iono;
        }
        store.extend(data.records);
    }
    if store.is_empty() {
        return Err(SolveFileError::NoEphemeris);
    }
    Ok(solve_log(&log, &store, iono.as_ref(), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{ned_matrix, GlobalPose};
    use crate::measurements::Epoch;
    use crate::testkit::{generate_drives, SceneConfig, SyntheticScene};

    fn scene(duration_s: f64) -> SyntheticScene {
        generate_drives(&SceneConfig {
            drives: 1,
            duration_s,
            ..Default::default()
        })
        .unwrap()
    }

    fn run(scene: &SyntheticScene, mode: SolveMode) -> SolveOutput {
        let log = parse_raw_records(scene.drives[0].raw_csv().as_bytes()).unwrap();
        let store = EphemerisStore::from_records(scene.nav.clone());
        let cfg = SolveConfig {
            mode,
            ..Default::default()
        };
        solve_log(&log, &store, Some(&scene.iono), &cfg)
    }

    /// RMS of the 3D and vertical errors against truth.
    fn errors(fixes: &[Fix], truth: &[GlobalPose]) -> (f64, f64) {
        let mut sum3 = 0.0;
        let mut sumv = 0.0;
        for f in fixes {
            let t = truth.iter().find(|p| p.time == f.time).expect("fix at a truth epoch");
            let d = f.position.0 - t.position.0;
            let geo = ecef_to_geodetic(&t.position).unwrap();
            let down = (ned_matrix(&geo) * d).z;
            sum3 += d.norm_squared();
            sumv += down * down;
        }
        let n = fixes.len() as f64;
        ((sum3 / n).sqrt(), (sumv / n).sqrt())
    }

    #[test]
    fn one_good_epoch_gives_one_fix() {
        let s = scene(1.0);
        let log = parse_raw_records(s.drives[0].raw_csv().as_bytes()).unwrap();
        let one = RawLog {
            epochs: vec![log.epochs[0].clone()],
            ..Default::default()
        };
        let store = EphemerisStore::from_records(s.nav.clone());
        let out = solve_log(&one, &store, Some(&s.iono), &SolveConfig::default());
        assert_eq!(out.fixes.len(), 1);
        assert_eq!(out.report.fixes, 1);
        assert!(out.fixes[0].position.distance(&s.drives[0].truth[0].position) < 30.0);
    }

    #[test]
    fn epochs_without_enough_satellites_are_counted() {
        let s = scene(0.5);
        let log = parse_raw_records(s.drives[0].raw_csv().as_bytes()).unwrap();
        let e = &log.epochs[0];
        let thin = RawLog {
            epochs: vec![Epoch {
                time: e.time,
                records: e.records[..3].to_vec(),
            }],
            ..Default::default()
        };
        let store = EphemerisStore::from_records(s.nav.clone());
        let out = solve_log(&thin, &store, Some(&s.iono), &SolveConfig::default());
        assert!(out.fixes.is_empty());
        assert_eq!(out.report.epoch_failures.get("underdetermined"), Some(&1));
    }

    #[test]
    fn output_is_deterministic() {
        let s = scene(10.0);
        for mode in [SolveMode::Wls, SolveMode::Kf] {
            let a = write_fix_csv_of(&run(&s, mode));
            let b = write_fix_csv_of(&run(&s, mode));
            assert_eq!(a, b);
        }
    }

    fn write_fix_csv_of(out: &SolveOutput) -> String {
        super::super::write_fix_csv(&out.fixes)
    }

    #[test]
    fn synthetic_drive_accuracy() {
        let s = scene(120.0);
        let wls = run(&s, SolveMode::Wls);
        let kf = run(&s, SolveMode::Kf);
        assert_eq!(wls.fixes.len(), s.drives[0].truth.len());
        assert_eq!(kf.fixes.len(), s.drives[0].truth.len());
        assert_eq!(kf.report.filter_resets, 0);
        let (wls_3d, wls_v) = errors(&wls.fixes, &s.drives[0].truth);
        let (kf_3d, kf_v) = errors(&kf.fixes, &s.drives[0].truth);
        // sigma 2 m with PDOP below 3
        assert!(wls_3d < 6.0, "wls 3d rmse {wls_3d}");
        assert!(kf_3d < wls_3d);
        assert!(kf_v < 0.6 * wls_v, "kf {kf_v} vs wls {wls_v}");
    }
}
