//! Acceptance gate. One line per criterion, then a single assertion that
//! every checked criterion passed.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix2x3, UnitQuaternion, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rawgnss::ephemeris::{
    glonass_propagate, gps_sat_state, parse_rinex_nav, write_rinex_nav, NavRecord, SatId, OMEGA_EARTH,
    SPEED_OF_LIGHT,
};
use rawgnss::frames::{
    geodetic_to_ecef, ned_matrix, quat_angle_between, EcefPosition, GeodeticPosition, GlobalPose, GnssTime,
    TangentPlane,
};
use rawgnss::measurements::{parse_raw_records, write_raw_records, IonoParams, ProcessedMeasurement, RawGnssRecord};
use rawgnss::refine::{refine, DriveInput, RefineConfig};
use rawgnss::solver::{
    wls_solve, write_fix_csv, read_fix_csv, FilterConfig, KalmanFilter, ObservationKind, PvtSolution, SolveConfig,
    SolveMode, WlsConfig,
};
use rawgnss::testkit::features::generate_feature_scene;
use rawgnss::testkit::{
    generate_drives, oracles, sample_glonass_ephemeris, sample_gps_ephemeris, sky_positions, synthetic_measurement,
    SceneConfig,
};
use rawgnss::validation::{
    compare_solutions, grid_altitude_report, group_by_frame, orientation_jacobian, orientation_rmse, project,
    translation_jacobian, DriveFix, GridSpec, Intrinsics,
};

/// KF-over-WLS grid altitude RMSE reduction on the default scene with the
/// grid anchored at the road start.
const PINNED_REDUCTION: f64 = 0.917989924775605;

struct Outcome {
    pass: Option<bool>,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass: Some(pass), detail }
}

fn road_origin() -> GeodeticPosition {
    GeodeticPosition::new(37.4, -122.1, 30.0)
}

// ---------------------------------------------------------------- pipeline

/// synth -> solve (WLS and KF) -> grid reports -> compare, all through
/// files in `dir`. Returns the reduction and every output file's bytes.
fn pipeline(dir: &Path) -> (f64, Vec<(String, Vec<u8>)>) {
    let scene = generate_drives(&SceneConfig::default()).unwrap();
    let nav = dir.join("nav.rnx");
    std::fs::write(&nav, scene.nav_text()).unwrap();
    let mut outputs = Vec::new();
    let mut reports = Vec::new();
    for mode in [SolveMode::Wls, SolveMode::Kf] {
        let cfg = SolveConfig {
            mode,
            ..SolveConfig::default()
        };
        let mut fixes = Vec::new();
        for (d, drive) in scene.drives.iter().enumerate() {
            let raw = dir.join(format!("raw_{d}.csv"));
            std::fs::write(&raw, drive.raw_csv()).unwrap();
            let out = rawgnss::solver::solve_file(&raw, std::slice::from_ref(&nav), &cfg).unwrap();
            let text = write_fix_csv(&out.fixes);
            fixes.extend(read_fix_csv(&text).unwrap().into_iter().map(|f| DriveFix {
                drive: d as u32,
                position: f.position,
                vdop: f.vdop,
            }));
            outputs.push((format!("{}_{d}.csv", mode.as_str()), text.into_bytes()));
        }
        let report = grid_altitude_report(&fixes, &GridSpec::new(road_origin())).unwrap();
        outputs.push((format!("{}.json", mode.as_str()), serde_json::to_vec(&report).unwrap()));
        reports.push(report);
    }
    let cmp = compare_solutions(&reports[1], &reports[0]).unwrap();
    outputs.push(("compare.json".into(), serde_json::to_vec(&cmp).unwrap()));
    (cmp.reduction_fraction, outputs)
}

fn c1_kf_reduction(reduction: f64, seconds: f64) -> Outcome {
    let ok = reduction >= 0.3 && (reduction - PINNED_REDUCTION).abs() < 1e-12 && seconds < 30.0;
    check(ok, format!("reduction {reduction:.6} (>= 0.30, pinned {PINNED_REDUCTION}), {seconds:.1} s"))
}

fn c10_determinism(a: &[(String, Vec<u8>)], b: &[(String, Vec<u8>)]) -> Outcome {
    let same = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y);
    let bytes: usize = a.iter().map(|(_, v)| v.len()).sum();
    check(same, format!("{} files, {bytes} bytes, identical: {same}", a.len()))
}

// -------------------------------------------------------------------- grid

fn c2_grid_sigma() -> Outcome {
    let t = Instant::now();
    let origin = GeodeticPosition::new(37.4, -122.1, 10.0);
    let plane = TangentPlane::at(&origin);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut fixes = Vec::new();
    for d in 0..50 {
        for i in 0..100 {
            let east = 0.25 + 2.0 * i as f64 + rng.random_range(0.0..0.5);
            fixes.push(DriveFix {
                drive: d,
                position: plane.from_ned(&Vector3::new(1.0, east, -n.sample(&mut rng))),
                vdop: Some(1.5),
            });
        }
    }
    let r = grid_altitude_report(&fixes, &GridSpec::new(origin)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    check(
        (0.9..=1.1).contains(&r.sigma_corrected) && secs < 10.0,
        format!("sigma_corrected {:.4} m (in [0.9, 1.1]), {secs:.2} s", r.sigma_corrected),
    )
}

// ------------------------------------------------------------- orientation

fn c3_orientation() -> Outcome {
    let cfg = SceneConfig {
        feature_drives: 1,
        pose_sigma_m: 0.0,
        pose_sigma_deg: 0.0,
        pixel_sigma: 0.0,
        ..SceneConfig::default()
    };
    let scene = generate_feature_scene(&cfg).unwrap();
    let drive = &scene.drives[0];
    let yaw = 0.25f64.to_radians();
    let off: Vec<GlobalPose> = drive.truth.iter().map(|p| p.rotated_in_body(&Vector3::new(0.0, 0.0, yaw))).collect();
    let est = orientation_rmse(&group_by_frame(&off, &drive.features).unwrap()).unwrap();
    let yaw_ok = (est.rmse_deg[2] / 0.25 - 1.0).abs() <= 0.05;

    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        worst = worst.max(jacobian_scene_error(seed));
    }
    check(
        yaw_ok && worst < 1e-5,
        format!("yaw {:.5} deg (0.25 +-5%), worst jacobian rel err {worst:.2e} (< 1e-5)", est.rmse_deg[2]),
    )
}

/// Largest relative mismatch between the analytic Jacobians and central
/// differences over one random pose with ten points.
fn jacobian_scene_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GeodeticPosition::new(rng.random_range(-80.0..80.0), rng.random_range(-180.0..180.0), rng.random_range(-50.0..3000.0));
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let pose = GlobalPose::new(
        GnssTime::new(2035, 0.0).unwrap(),
        geodetic_to_ecef(&g),
        UnitQuaternion::from_scaled_axis(axis * 3.0),
    );
    let k = Intrinsics {
        fx: rng.random_range(300.0..2000.0),
        fy: rng.random_range(300.0..2000.0),
        cx: rng.random_range(200.0..1000.0),
        cy: rng.random_range(200.0..600.0),
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let local = Vector3::new(rng.random_range(3.0..60.0), rng.random_range(-20.0..20.0), rng.random_range(-6.0..3.0));
        let world = pose.from_local(&local);
        let h = 1e-6;
        let mut fd_rot = Matrix2x3::zeros();
        let mut fd_pos = Matrix2x3::zeros();
        for i in 0..3 {
            let e = Vector3::ith(i, 1.0);
            let plus = project(&pose.rotated_in_body(&(e * h)), &k, &world).unwrap();
            let minus = project(&pose.rotated_in_body(&(-e * h)), &k, &world).unwrap();
            fd_rot.set_column(i, &((plus - minus) / (2.0 * h)));
            // step taken as actually represented next to a ~6e6 m coordinate
            let a = pose.translated(&(e * 1e-4));
            let b = pose.translated(&(-e * 1e-4));
            let step = a.position.0[i] - b.position.0[i];
            let d = project(&a, &k, &world).unwrap() - project(&b, &k, &world).unwrap();
            fd_pos.set_column(i, &(d / step));
        }
        let jr = orientation_jacobian(&pose, &k, &world);
        let jt = translation_jacobian(&pose, &k, &world);
        worst = worst.max((jr - fd_rot).abs().max() / jr.abs().max());
        worst = worst.max((jt - fd_pos).abs().max() / jt.abs().max());
    }
    worst
}

// ------------------------------------------------------------------ orbits

fn c5_orbits() -> Outcome {
    let eph = sample_gps_ephemeris();
    let mut gps: f64 = 0.0;
    for i in 0..=420 {
        let tk = -7000.0 + 50.0 * i as f64;
        let s = gps_sat_state(&eph, &eph.toe.add_seconds(tk)).unwrap();
        gps = gps.max((s.position.0 - oracles::gps_position_table(&eph, tk)).norm());
    }
    let glo = sample_glonass_ephemeris();
    let (p60, _) = glonass_propagate(&glo.position, &glo.velocity, &glo.acceleration, 900.0, 60.0);
    let (p1, _) = glonass_propagate(&glo.position, &glo.velocity, &glo.acceleration, 900.0, 1.0);
    let glonass = (p60 - p1).norm();
    check(
        gps < 1e-3 && glonass < 1e-2,
        format!("gps vs oracle {gps:.2e} m (< 1e-3), glonass 60 s vs 1 s over 900 s {glonass:.2e} m (< 1e-2)"),
    )
}

// --------------------------------------------------------------------- WLS

fn gps_meas(sats: &[Vector3<f64>], rx: &Vector3<f64>, offset: impl Fn(usize) -> f64) -> Vec<ProcessedMeasurement> {
    sats.iter()
        .enumerate()
        .map(|(i, s)| synthetic_measurement(SatId::gps(i as u8 + 1).unwrap(), *s, Vector3::zeros(), (s - rx).norm() + offset(i), None))
        .collect()
}

fn c6_wls() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let g = GeodeticPosition::new(rng.random_range(-85.0..85.0), rng.random_range(-180.0..180.0), rng.random_range(-100.0..5000.0));
        let rx = geodetic_to_ecef(&g).0;
        let n = rng.random_range(5..=12);
        let cb = rng.random_range(-3e5..3e5);
        let sats = sky_positions(&mut rng, &rx, n);
        let sol = wls_solve(&gps_meas(&sats, &rx, |_| cb), &EcefPosition::new(0.0, 0.0, 0.0), &WlsConfig::default()).unwrap();
        worst = worst.max((sol.position.0 - rx).norm());
    }

    let sigma = 3.0;
    let noise = Normal::new(0.0, sigma).unwrap();
    let g = GeodeticPosition::new(-23.5, 133.9, 600.0);
    let rx = geodetic_to_ecef(&g).0;
    let sats = sky_positions(&mut rng, &rx, 9);
    let r = ned_matrix(&g);
    let mut sq = 0.0;
    let mut vdop = 0.0;
    for _ in 0..1000 {
        let draws: Vec<f64> = (0..sats.len()).map(|_| noise.sample(&mut rng)).collect();
        let sol = wls_solve(&gps_meas(&sats, &rx, |i| draws[i]), &EcefPosition(rx), &WlsConfig::default()).unwrap();
        sq += (r * (sol.position.0 - rx)).z.powi(2);
        vdop = sol.dop.vdop;
    }
    let ratio = (sq / 1000.0).sqrt() / (vdop * sigma);
    check(
        worst < 1e-6 && (ratio - 1.0).abs() <= 0.15,
        format!("noiseless worst {worst:.2e} m (< 1e-6), vertical rmse / (vdop*sigma) = {ratio:.3} (1 +-0.15)"),
    )
}

// ---------------------------------------------------------------------- KF

fn start_fix(clock_bias: f64) -> PvtSolution {
    PvtSolution {
        time: GnssTime::new(2035, 1000.0).unwrap(),
        position: geodetic_to_ecef(&GeodeticPosition::new(52.5, 13.4, 40.0)),
        velocity: Vector3::new(0.0, 10.0, 0.0),
        velocity_valid: true,
        clock_bias,
        clock_drift: 0.5,
        glonass_bias: 0.0,
        covariance: DMatrix::identity(4, 4) * 4.0,
        dop: Default::default(),
        n_sats_used: 8,
        residuals: vec![],
    }
}

/// Pseudoranges with weight 1/sigma^2 and matching rates for a receiver
/// at `rx` moving with `vel`.
fn kf_epoch(sats: &[Vector3<f64>], rx: &Vector3<f64>, vel: &Vector3<f64>, cb: f64, noise: &[f64], rate_noise: &[f64]) -> Vec<ProcessedMeasurement> {
    sats.iter()
        .enumerate()
        .map(|(i, sp)| {
            let u = (sp - rx).normalize();
            let b = u.dot(&(OMEGA_EARTH * Vector3::new(sp.y, -sp.x, 0.0)));
            let rate = (u.dot(&(-vel)) + 0.5) / (1.0 - b / SPEED_OF_LIGHT);
            let mut m = synthetic_measurement(
                SatId::gps(i as u8 + 1).unwrap(),
                *sp,
                Vector3::zeros(),
                (sp - rx).norm() + cb + noise[i],
                Some(rate + rate_noise[i]),
            );
            m.weight = 0.25;
            m
        })
        .collect()
}

fn c7_filter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 2.0).unwrap();
    let rate_noise = Normal::new(0.0, 0.1).unwrap();
    let mut kf = KalmanFilter::new(FilterConfig::default());
    let mut s = kf.init_from_fix(&start_fix(100.0));
    let t0 = s.time;
    let truth0 = s.position().0;
    let vel = Vector3::new(0.0, 10.0, 0.0);
    let sats = sky_positions(&mut rng, &truth0, 8);
    let mut min_eig = f64::INFINITY;
    let mut normalized = Vec::new();
    for k in 1..=10_000 {
        let t = s.time.add_seconds(0.1);
        let dt = t - t0;
        let rx = truth0 + vel * dt;
        s = kf.predict(&s, &t).unwrap();
        let pn: Vec<f64> = (0..8).map(|_| noise.sample(&mut rng)).collect();
        let rn: Vec<f64> = (0..8).map(|_| rate_noise.sample(&mut rng)).collect();
        let (next, rep) = kf.update(&s, &kf_epoch(&sats, &rx, &vel, 100.0 + 0.5 * dt, &pn, &rn));
        min_eig = min_eig.min(next.p.symmetric_eigenvalues().min());
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
    let nis = normalized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);

    // the same data with every pseudorange and the initial clock shifted
    let shift = 777.0;
    let (wls_pos, wls_clock) = {
        let g = GeodeticPosition::new(-33.9, 18.4, 20.0);
        let rx = geodetic_to_ecef(&g).0;
        let sats = sky_positions(&mut rng, &rx, 9);
        let draws: Vec<f64> = (0..9).map(|_| noise.sample(&mut rng)).collect();
        let a = wls_solve(&gps_meas(&sats, &rx, |i| draws[i]), &EcefPosition(rx), &WlsConfig::default()).unwrap();
        let b = wls_solve(&gps_meas(&sats, &rx, |i| draws[i] + shift), &EcefPosition(rx), &WlsConfig::default()).unwrap();
        ((a.position.0 - b.position.0).norm(), (b.clock_bias - a.clock_bias - shift).abs())
    };
    let mut kf_a = KalmanFilter::new(FilterConfig::default());
    let mut kf_b = KalmanFilter::new(FilterConfig::default());
    let mut a = kf_a.init_from_fix(&start_fix(100.0));
    let mut b = kf_b.init_from_fix(&start_fix(100.0 + shift));
    let (mut kf_pos, mut kf_clock): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let t = a.time.add_seconds(0.1);
        let dt = t - t0;
        let rx = truth0 + vel * dt;
        let pn: Vec<f64> = (0..8).map(|_| noise.sample(&mut rng)).collect();
        let rn = vec![0.0; 8];
        let cb = 100.0 + 0.5 * dt;
        let pa = kf_a.predict(&a, &t).unwrap();
        let pb = kf_b.predict(&b, &t).unwrap();
        a = kf_a.update(&pa, &kf_epoch(&sats, &rx, &vel, cb, &pn, &rn)).0;
        b = kf_b.update(&pb, &kf_epoch(&sats, &rx, &vel, cb + shift, &pn, &rn)).0;
        kf_pos = kf_pos.max((a.position().0 - b.position().0).norm());
        kf_clock = kf_clock.max((b.clock_bias() - a.clock_bias() - shift).abs());
    }
    let sep = wls_pos.max(kf_pos).max(wls_clock).max(kf_clock);
    check(
        min_eig > -1e-9 && (0.8..=1.2).contains(&nis) && sep < 1e-9,
        format!("min eigenvalue {min_eig:.2e} over 1e4 cycles, innovation variance {nis:.3} (in [0.8, 1.2]), clock shift leak {sep:.2e} m (< 1e-9)"),
    )
}

// ------------------------------------------------------------------ refine

fn c8_refine() -> Outcome {
    let noisy = SceneConfig {
        feature_drives: 3,
        ..SceneConfig::default()
    };
    let scene = generate_feature_scene(&noisy).unwrap();
    let cfg = RefineConfig::default();
    let inputs = scene.refine_inputs();
    let out = refine(&inputs, &cfg).unwrap();
    let ratio = out.final_error() / out.initial_error();

    let clean = generate_feature_scene(&SceneConfig {
        pose_sigma_m: 0.0,
        pose_sigma_deg: 0.0,
        pixel_sigma: 0.0,
        ..noisy.clone()
    })
    .unwrap();
    let fixed = refine(&clean.refine_inputs(), &cfg).unwrap();
    let mut drift: f64 = 0.0;
    for (d, drive) in clean.drives.iter().enumerate() {
        for (p, q) in fixed.poses[d].iter().zip(&drive.poses) {
            drift = drift.max((p.position.0 - q.position.0).norm());
            drift = drift.max(quat_angle_between(&p.orientation, &q.orientation));
        }
    }

    let rot = UnitQuaternion::from_scaled_axis(Vector3::new(-0.9, 0.3, 1.6));
    let shift = Vector3::new(-2500.0, 730.0, 91.0);
    let move_pose = |p: &GlobalPose| GlobalPose {
        position: EcefPosition(rot * p.position.0 + shift),
        orientation: p.orientation * rot.inverse(),
        ..*p
    };
    let moved: Vec<DriveInput> = inputs
        .iter()
        .map(|d| DriveInput {
            poses: d.poses.iter().map(move_pose).collect(),
            ..d.clone()
        })
        .collect();
    let out_moved = refine(&moved, &cfg).unwrap();
    let mut gauge: f64 = 0.0;
    for (da, db) in out.poses.iter().zip(&out_moved.poses) {
        for (pa, pb) in da.iter().zip(db) {
            let expect = move_pose(pa);
            gauge = gauge.max((expect.position.0 - pb.position.0).norm());
            gauge = gauge.max(quat_angle_between(&expect.orientation, &pb.orientation));
        }
    }
    check(
        ratio < 0.5 && drift <= 1e-9 && gauge < 1e-6,
        format!(
            "{:.2} -> {:.2} px (ratio {ratio:.3} < 0.5), noiseless drift {drift:.1e}, gauge {gauge:.1e} (< 1e-6)",
            out.initial_error(),
            out.final_error()
        ),
    )
}

// ----------------------------------------------------------------- parsers

fn mutate(rng: &mut ChaCha8Rng, seed: &[u8]) -> Vec<u8> {
    const ALPHABET: &[u8] = b"0123456789.,-+eED \n\r\tGRC>*";
    let mut v = seed.to_vec();
    for _ in 0..rng.random_range(1..8) {
        if v.is_empty() {
            break;
        }
        let at = rng.random_range(0..v.len());
        match rng.random_range(0..6) {
            0 => v[at] = rng.random(),
            1 => v[at] = ALPHABET[rng.random_range(0..ALPHABET.len())],
            2 => {
                v.remove(at);
            }
            3 => v.insert(at, ALPHABET[rng.random_range(0..ALPHABET.len())]),
            4 => v.truncate(at),
            _ => {
                let end = (at + rng.random_range(1..200)).min(v.len());
                let chunk = v[at..end].to_vec();
                let to = rng.random_range(0..=v.len());
                v.splice(to..to, chunk);
            }
        }
    }
    v
}

/// Feeds `count` random and mutated inputs to `parse`; returns the number
/// that panicked.
fn fuzz(count: usize, seed: u64, valid: &[u8], parse: impl Fn(&[u8])) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut panics = 0;
    for i in 0..count {
        let input = if i % 2 == 0 {
            let mut v = vec![0u8; rng.random_range(0..300)];
            rng.fill_bytes(&mut v);
            // keep a valid header on a share of the random inputs
            if i % 4 == 0 {
                let header_end = valid.iter().position(|b| *b == b'\n').map_or(0, |p| p + 1);
                let mut with = valid[..header_end].to_vec();
                with.extend(v);
                with
            } else {
                v
            }
        } else {
            mutate(&mut rng, valid)
        };
        if catch_unwind(AssertUnwindSafe(|| parse(&input))).is_err() {
            panics += 1;
        }
    }
    panics
}

fn hand_built_nav() -> (Vec<NavRecord>, IonoParams) {
    let glo = sample_glonass_ephemeris();
    let records = vec![
        NavRecord::Gps(SatId::gps(12).unwrap(), sample_gps_ephemeris()),
        NavRecord::Glonass(SatId::glonass(17, glo.freq_channel).unwrap(), glo),
    ];
    let iono = IonoParams {
        alpha: [2.515e-8, 1.49e-8, -1.192e-7, 0.0],
        beta: [1.208e5, 1.638e4, -2.621e5, 1.966e5],
    };
    (records, iono)
}

fn hand_built_raw() -> Vec<RawGnssRecord> {
    let t0 = GnssTime::new(2035, 7921.5).unwrap();
    let t1 = GnssTime::new(2035, 7921.6).unwrap();
    vec![
        RawGnssRecord {
            time: t0,
            sat: SatId::gps(3).unwrap(),
            pseudorange: Some(21_438_712.375),
            doppler: Some(-1342.0625),
            carrier_phase: Some(112_661_003.25),
            cn0: Some(44.5),
            pr_std: Some(3.2),
        },
        RawGnssRecord {
            time: t0,
            sat: SatId::glonass(9, -2).unwrap(),
            pseudorange: Some(19_902_144.1),
            doppler: None,
            carrier_phase: None,
            cn0: Some(31.0),
            pr_std: None,
        },
        RawGnssRecord {
            time: t1,
            sat: SatId::gps(3).unwrap(),
            pseudorange: Some(21_438_844.9),
            doppler: Some(-1341.75),
            carrier_phase: None,
            cn0: None,
            pr_std: Some(3.25),
        },
    ]
}

fn c9_parsers() -> Outcome {
    let (records, iono) = hand_built_nav();
    let nav_text = write_rinex_nav(&records, Some(&iono), 18.0);
    let nav = parse_rinex_nav(nav_text.as_bytes()).unwrap();
    let nav_exact = nav.records == records && nav.iono == Some(iono) && nav.skipped == 0;

    let raw = hand_built_raw();
    let raw_text = write_raw_records(&raw);
    let log = parse_raw_records(raw_text.as_bytes()).unwrap();
    let back: Vec<RawGnssRecord> = log.epochs.iter().flat_map(|e| e.records.iter().cloned()).collect();
    let raw_exact = back == raw && log.malformed == 0;

    // the default scene's navigation file and a slice of its raw log as mutation seeds
    let scene = generate_drives(&SceneConfig {
        drives: 1,
        duration_s: 1.0,
        ..SceneConfig::default()
    })
    .unwrap();
    let nav_seed = scene.nav_text();
    let raw_seed = scene.drives[0].raw_csv();

    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let n = 100_000;
    let nav_panics = fuzz(n, 91, nav_seed.as_bytes(), |b| {
        let _ = parse_rinex_nav(b);
    });
    let raw_panics = fuzz(n, 92, raw_seed.as_bytes(), |b| {
        let _ = parse_raw_records(b);
    });
    std::panic::set_hook(hook);
    check(
        nav_panics == 0 && raw_panics == 0 && nav_exact && raw_exact,
        format!(
            "{n} inputs each: rinex panics {nav_panics}, raw panics {raw_panics}; round trip exact: rinex {nav_exact}, raw {raw_exact}"
        ),
    )
}

#[test]
fn acceptance() {
    let t = Instant::now();
    let dir_a = tempfile::tempdir().unwrap();
    let (reduction, files_a) = pipeline(dir_a.path());
    let first_run = t.elapsed().as_secs_f64();
    let dir_b = tempfile::tempdir().unwrap();
    let (_, files_b) = pipeline(dir_b.path());

    let results: Vec<(&str, Outcome)> = vec![
        ("1  KF vs WLS grid altitude RMSE", c1_kf_reduction(reduction, first_run)),
        ("2  grid sigma recovery", c2_grid_sigma()),
        ("3  injected yaw and Jacobians", c3_orientation()),
        (
            "4  dataset table values",
            Outcome {
                pass: None,
                detail: "context only: needs the original drive recordings".into(),
            },
        ),
        ("5  orbit propagation", c5_orbits()),
        ("6  WLS recovery and noise", c6_wls()),
        ("7  filter health", c7_filter()),
        ("8  multi-drive pose refinement", c8_refine()),
        ("9  parser robustness", c9_parsers()),
        ("10 end-to-end determinism", c10_determinism(&files_a, &files_b)),
    ];
    let mut failed = Vec::new();
    let _ = writeln!(std::io::stdout().lock());
    for (name, o) in &results {
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed.push(*name);
                "FAIL"
            }
            None => "INFO",
        };
        // written past the test harness capture so the table always shows
        let _ = writeln!(std::io::stdout().lock(), "{tag} {name}: {}", o.detail);
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
