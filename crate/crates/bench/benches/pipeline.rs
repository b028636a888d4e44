use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use rawgnss::ephemeris::{gps_sat_state, EphemerisStore};
use rawgnss::measurements::parse_raw_records;
use rawgnss::refine::{refine, RefineConfig};
use rawgnss::solver::{solve_log, SolveConfig, SolveMode};
use rawgnss::testkit::features::generate_feature_scene;
use rawgnss::testkit::{generate_drives, sample_gps_ephemeris, SceneConfig};
use rawgnss::validation::{grid_altitude_report, DriveFix, GridSpec};
use rawgnss::GeodeticPosition;

fn orbits(c: &mut Criterion) {
    let eph = sample_gps_ephemeris();
    let t = eph.toe.add_seconds(1234.5);
    c.bench_function("gps_sat_state", |b| b.iter(|| gps_sat_state(black_box(&eph), black_box(&t))));
}

fn solving(c: &mut Criterion) {
    let cfg = SceneConfig {
        drives: 1,
        duration_s: 10.0,
        ..SceneConfig::default()
    };
    let scene = generate_drives(&cfg).unwrap();
    let raw = scene.drives[0].raw_csv();
    let store = EphemerisStore::from_records(scene.nav.clone());
    c.bench_function("parse_raw_100_epochs", |b| b.iter(|| parse_raw_records(black_box(raw.as_bytes()))));
    let log = parse_raw_records(raw.as_bytes()).unwrap();
    for mode in [SolveMode::Wls, SolveMode::Kf] {
        let solve = SolveConfig {
            mode,
            ..SolveConfig::default()
        };
        c.bench_function(&format!("solve_100_epochs_{}", mode.as_str()), |b| {
            b.iter(|| solve_log(&log, &store, Some(&scene.iono), &solve))
        });
    }
}

fn validation(c: &mut Criterion) {
    let cfg = SceneConfig {
        drives: 3,
        duration_s: 30.0,
        ..SceneConfig::default()
    };
    let scene = generate_drives(&cfg).unwrap();
    let fixes: Vec<DriveFix> = scene
        .drives
        .iter()
        .enumerate()
        .flat_map(|(d, drive)| {
            drive.truth.iter().map(move |p| DriveFix {
                drive: d as u32,
                position: p.position,
                vdop: Some(1.5),
            })
        })
        .collect();
    let spec = GridSpec::new(GeodeticPosition::new(cfg.lat_deg, cfg.lon_deg, cfg.height_m));
    c.bench_function("grid_report_900_fixes", |b| b.iter(|| grid_altitude_report(black_box(&fixes), &spec)));

    let features = generate_feature_scene(&SceneConfig {
        feature_drives: 3,
        ..SceneConfig::default()
    })
    .unwrap();
    let inputs = features.refine_inputs();
    let mut group = c.benchmark_group("refine");
    group.sample_size(10);
    group.bench_function("three_drives", |b| {
        b.iter_batched(|| inputs.clone(), |i| refine(&i, &RefineConfig::default()), BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, orbits, solving, validation);
criterion_main!(benches);
