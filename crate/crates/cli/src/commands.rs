use std::io::BufReader;
use std::path::{Path, PathBuf};

use rawgnss::ephemeris::{fetch_nav_file, FetchError, HttpTransport, NavKind};
use rawgnss::frames::{read_pose_csv, write_pose_csv, GeodeticPosition, GlobalPose};
use rawgnss::io::atomic_write;
use rawgnss::measurements::parse_raw_records;
use rawgnss::refine::{read_track_file, refine, write_trace_csv, write_track_file, DriveInput, RefineError};
use rawgnss::solver::{read_fix_csv, solve_file, write_fix_csv, SolveFileError, SolveMode};
use rawgnss::testkit::features::generate_feature_scene;
use rawgnss::testkit::{generate_drives, SceneConfig};
use rawgnss::validation::{
    centroid_origin, compare_solutions, grid_altitude_report, group_by_frame, orientation_rmse, read_feature_file,
    write_feature_file, DriveFix, GridReport, GridSpec, ValidationError,
};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{
    Cli, Command, CompareArgs, FetchEphArgs, OrientationRmseArgs, RefineArgs, SolveArgs, SynthArgs, ValidateGridArgs,
};

pub fn run(cli: Cli) -> Result<Value, CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::FetchEph(a) => fetch_eph(&cfg, a),
        Command::Solve(a) => solve(cfg, a),
        Command::ValidateGrid(a) => validate_grid(&cfg, a),
        Command::Compare(a) => compare(a),
        Command::OrientationRmse(a) => orientation(a),
        Command::Refine(a) => refine_cmd(cfg, a),
        Command::Synth(a) => synth(a),
    }
}

/// Output files are all rendered before the first one is written, and each
/// is written with a rename so no reader sees a partial file.
fn write_outputs(files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    for (path, bytes) in files {
        atomic_write(path, bytes).map_err(|e| CliError::Output {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn pretty(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s.into_bytes()
}

fn poses_csv(poses: &[GlobalPose]) -> Vec<u8> {
    let mut out = Vec::new();
    write_pose_csv(&mut out, poses).expect("writing to memory");
    out
}

fn fetch_error(e: FetchError) -> CliError {
    CliError::NoEphemeris(e.to_string())
}

fn fetch_eph(cfg: &RunConfig, a: FetchEphArgs) -> Result<Value, CliError> {
    let fc = cfg.fetch(a.cache_dir, a.base_url);
    let transport = HttpTransport::default();
    let gps = fetch_nav_file(a.date, NavKind::Gps, &fc, &transport).map_err(fetch_error)?;
    let glonass = if a.glonass {
        Some(fetch_nav_file(a.date, NavKind::Glonass, &fc, &transport).map_err(fetch_error)?)
    } else {
        None
    };
    Ok(json!({"command": "fetch-eph", "gps": gps, "glonass": glonass}))
}

/// Navigation files for the UTC day of the first epoch in `raw`.
fn auto_nav(cfg: &RunConfig, a: &SolveArgs) -> Result<Vec<PathBuf>, CliError> {
    let bytes = std::fs::read(&a.raw).map_err(|e| CliError::io(&a.raw, e))?;
    let log = parse_raw_records(&bytes).map_err(|e| CliError::input(&a.raw, e))?;
    let Some(first) = log.epochs.first() else {
        return Err(CliError::input(&a.raw, "no valid epochs"));
    };
    let utc = first.time.to_gps_calendar() - chrono::Duration::seconds(cfg.leap_seconds as i64);
    let day = utc.date();
    let fc = cfg.fetch(a.cache_dir.clone(), a.base_url.clone());
    let transport = HttpTransport::default();
    let mut nav = vec![fetch_nav_file(day, NavKind::Gps, &fc, &transport).map_err(fetch_error)?];
    let has_glonass = log.epochs.iter().flat_map(|e| &e.records).any(|r| r.sat.is_glonass());
    if has_glonass {
        // GPS alone still gives fixes, so a missing GLONASS file is not fatal
        if let Ok(p) = fetch_nav_file(day, NavKind::Glonass, &fc, &transport) {
            nav.push(p);
        }
    }
    Ok(nav)
}

fn solve(mut cfg: RunConfig, a: SolveArgs) -> Result<Value, CliError> {
    if let Some(m) = a.elevation_mask {
        cfg.elevation_mask_deg = m;
    }
    if let Some(c) = a.cn0_floor {
        cfg.cn0_floor = c;
    }
    cfg.check()?;
    let mode: SolveMode = a.mode.parse().map_err(CliError::Usage)?;
    let nav = if a.nav.is_empty() { auto_nav(&cfg, &a)? } else { a.nav.clone() };
    let out = solve_file(&a.raw, &nav, &cfg.solve(mode)).map_err(|e| match e {
        SolveFileError::Io { path, source } => CliError::io(&path, source),
        SolveFileError::Raw { path, source } => CliError::input(&path, source),
        SolveFileError::Nav { path, source } => CliError::input(&path, source),
        SolveFileError::NoEphemeris => CliError::NoEphemeris("navigation input has no usable records".into()),
    })?;
    if out.fixes.is_empty() {
        return Err(CliError::Processing(format!(
            "no epoch produced a fix ({} epochs, failures {:?})",
            out.report.epochs, out.report.epoch_failures
        )));
    }
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    write_outputs(&[
        (a.out.clone(), write_fix_csv(&out.fixes).into_bytes()),
        (report_path.clone(), pretty(&out.report)),
    ])?;
    Ok(json!({
        "command": "solve",
        "mode": mode.as_str(),
        "epochs": out.report.epochs,
        "fixes": out.fixes.len(),
        "out": a.out,
        "report": report_path,
    }))
}

fn parse_origin(s: &str) -> Result<Option<GeodeticPosition>, CliError> {
    if s == "auto" {
        return Ok(None);
    }
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--origin expects auto or lat,lon[,height], got {s:?}")))?;
    match v[..] {
        [lat, lon] => Ok(Some(GeodeticPosition::new(lat, lon, 0.0))),
        [lat, lon, h] => Ok(Some(GeodeticPosition::new(lat, lon, h))),
        _ => Err(CliError::Usage(format!("--origin expects auto or lat,lon[,height], got {s:?}"))),
    }
}

fn validate_grid(cfg: &RunConfig, a: ValidateGridArgs) -> Result<Value, CliError> {
    let origin = parse_origin(&a.origin)?;
    let mut fixes = Vec::new();
    for (drive, path) in a.fixes.iter().enumerate() {
        let rows = read_fix_csv(&read_text(path)?).map_err(|e| CliError::input(path, e))?;
        fixes.extend(rows.into_iter().map(|f| DriveFix {
            drive: drive as u32,
            position: f.position,
            vdop: f.vdop,
        }));
    }
    let origin = match origin {
        Some(o) => o,
        None => centroid_origin(&fixes).map_err(|e| CliError::Processing(e.to_string()))?,
    };
    let spec = GridSpec {
        origin,
        cell_size: a.cell.unwrap_or(cfg.grid.cell_size),
        min_passes: a.min_passes.unwrap_or(cfg.grid.min_passes),
        min_distinct_drives: a.min_drives.unwrap_or(cfg.grid.min_distinct_drives),
    };
    let report = grid_altitude_report(&fixes, &spec).map_err(|e| match e {
        ValidationError::InvalidSpec(m) => CliError::Config(m),
        other => CliError::Processing(other.to_string()),
    })?;
    let mut hist = String::from("bin_left,bin_right,count\n");
    for b in &report.histogram {
        hist.push_str(&format!("{},{},{}\n", b.left, b.right, b.count));
    }
    let hist_path = a.histogram.unwrap_or_else(|| with_suffix(&a.out, ".histogram.csv"));
    write_outputs(&[(a.out.clone(), pretty(&report)), (hist_path.clone(), hist.into_bytes())])?;
    Ok(json!({
        "command": "validate-grid",
        "fixes_used": report.fixes_used,
        "cells": report.cells.len(),
        "rmse": report.rmse,
        "sigma_corrected": report.sigma_corrected,
        "out": a.out,
        "histogram": hist_path,
    }))
}

fn read_report(path: &Path) -> Result<GridReport, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

fn compare(a: CompareArgs) -> Result<Value, CliError> {
    let cand = read_report(&a.candidate)?;
    let base = read_report(&a.baseline)?;
    let cmp = compare_solutions(&cand, &base).map_err(|e| CliError::Input {
        path: format!("{} vs {}", a.candidate.display(), a.baseline.display()),
        reason: e.to_string(),
    })?;
    let mut files = Vec::new();
    if let Some(out) = &a.out {
        files.push((out.clone(), pretty(&cmp)));
    }
    if let Some(path) = &a.overlay {
        let mut csv = String::from("bin_left,bin_right,count_candidate,count_baseline\n");
        for b in &cmp.overlay {
            csv.push_str(&format!("{},{},{},{}\n", b.left, b.right, b.count_candidate, b.count_baseline));
        }
        files.push((path.clone(), csv.into_bytes()));
    }
    write_outputs(&files)?;
    Ok(json!({
        "command": "compare",
        "metric": cmp.metric,
        "rmse_candidate": cmp.rmse_candidate,
        "rmse_baseline": cmp.rmse_baseline,
        "reduction_fraction": cmp.reduction_fraction,
    }))
}

fn read_poses(path: &Path) -> Result<Vec<GlobalPose>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_pose_csv(BufReader::new(file)).map_err(|e| CliError::input(path, e))
}

fn orientation(a: OrientationRmseArgs) -> Result<Value, CliError> {
    let poses = read_poses(&a.poses)?;
    let (_, features) = read_feature_file(&read_text(&a.features)?).map_err(|e| CliError::input(&a.features, e))?;
    let frames = group_by_frame(&poses, &features).map_err(|e| CliError::input(&a.features, e))?;
    let est = orientation_rmse(&frames).map_err(|e| CliError::Processing(e.to_string()))?;
    write_outputs(&[(a.out.clone(), pretty(&est))])?;
    Ok(json!({
        "command": "orientation-rmse",
        "frames": est.frames.len(),
        "failures": est.failures.len(),
        "rmse_deg": est.rmse_deg,
        "out": a.out,
    }))
}

fn refine_cmd(mut cfg: RunConfig, a: RefineArgs) -> Result<Value, CliError> {
    if let Some(n) = a.max_iters {
        cfg.refine.max_iters = n;
    }
    cfg.check()?;
    let mut drives = Vec::with_capacity(a.drives.len());
    for dir in &a.drives {
        let poses = read_poses(&dir.join("poses.csv"))?;
        let tracks = dir.join("tracks.csv");
        let (intrinsics, observations) = read_track_file(&read_text(&tracks)?).map_err(|e| CliError::input(&tracks, e))?;
        intrinsics.check().map_err(|e| CliError::input(&tracks, e))?;
        drives.push(DriveInput {
            poses,
            intrinsics,
            observations,
        });
    }
    let out = refine(&drives, &cfg.refine).map_err(|e| match e {
        RefineError::Config(m) => CliError::Config(m),
        RefineError::UnknownFrame { drive, .. } => CliError::input(&a.drives[drive], e),
        other => CliError::Processing(other.to_string()),
    })?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = out
        .poses
        .iter()
        .enumerate()
        .map(|(d, p)| (a.out.join(format!("drive_{d:02}")).join("poses.csv"), poses_csv(p)))
        .collect();
    files.push((a.out.join("trace.csv"), write_trace_csv(&out.trace).into_bytes()));
    let report = json!({
        "drives": a.drives,
        "stop": out.stop,
        "initial_mean_reprojection_px": out.initial_error(),
        "final_mean_reprojection_px": out.final_error(),
        "tracks_mapped": out.map.len(),
        "flagged_frames": out.flags,
        "trace": out.trace,
    });
    files.push((a.out.join("report.json"), pretty(&report)));
    write_outputs(&files)?;
    Ok(json!({
        "command": "refine",
        "iterations": out.trace.len() - 1,
        "stop": out.stop,
        "initial_mean_reprojection_px": out.initial_error(),
        "final_mean_reprojection_px": out.final_error(),
        "out": a.out,
    }))
}

fn synth(a: SynthArgs) -> Result<Value, CliError> {
    let mut scene = match &a.scene {
        Some(p) => SceneConfig::from_toml(&read_text(p)?).map_err(|e| CliError::input(p, e))?,
        None => SceneConfig::default(),
    };
    if let Some(seed) = a.seed {
        scene.seed = seed;
    }
    scene.check().map_err(|e| CliError::Config(e.to_string()))?;
    let gnss = generate_drives(&scene).map_err(|e| CliError::Processing(e.to_string()))?;
    let mut files = vec![
        (a.out.join("scene.toml"), scene.to_toml().into_bytes()),
        (a.out.join("nav.rnx"), gnss.nav_text().into_bytes()),
    ];
    for (d, drive) in gnss.drives.iter().enumerate() {
        let dir = a.out.join(format!("drive_{d:02}"));
        files.push((dir.join("raw.csv"), drive.raw_csv().into_bytes()));
        files.push((dir.join("truth.csv"), drive.truth_csv().into_bytes()));
    }
    if scene.feature_drives > 0 {
        let fs = generate_feature_scene(&scene).map_err(|e| CliError::Processing(e.to_string()))?;
        for (d, drive) in fs.drives.iter().enumerate() {
            let dir = a.out.join("features").join(format!("drive_{d:02}"));
            files.push((dir.join("poses.csv"), poses_csv(&drive.poses)));
            files.push((dir.join("truth_poses.csv"), poses_csv(&drive.truth)));
            files.push((dir.join("tracks.csv"), write_track_file(&fs.intrinsics, &drive.tracks).into_bytes()));
            files.push((
                dir.join("features.csv"),
                write_feature_file(&fs.intrinsics, &drive.features).into_bytes(),
            ));
        }
    }
    write_outputs(&files)?;
    Ok(json!({
        "command": "synth",
        "seed": scene.seed,
        "drives": gnss.drives.len(),
        "feature_drives": scene.feature_drives,
        "files": files.len(),
        "out": a.out,
    }))
}
