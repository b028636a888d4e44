//! Multi-drive pose correction by alternating two steps:
//!
//! * map: every feature seen from at least two drives gets a world position,
//!   the robust mean of its back-projections through the current poses;
//! * relocalize: each frame's 6-DOF pose is re-fit to the map by
//!   Gauss-Newton on the reprojection error.
//!
//! One iteration runs both steps. The loop stops after `max_iters`, when the
//! mean reprojection error would grow (that iteration is discarded), or when
//! the relative improvement drops below `min_rel_improvement`.

mod tracks;

pub use tracks::{read_track_file, write_track_file, TrackObservation};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{EcefPosition, GlobalPose};
use crate::validation::{orientation_jacobian, translation_jacobian, Intrinsics, CAMERA_FROM_LOCAL};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("no feature is observed at least twice from at least two drives ({dropped} tracks dropped)")]
    InsufficientObservations { dropped: usize },
    #[error("drive {drive} frame {frame}: {tracks} mapped features, need at least 4")]
    Underconstrained { drive: usize, frame: usize, tracks: usize },
    #[error("drive {drive} frame {frame}: relocalization did not converge")]
    NoConvergence { drive: usize, frame: usize },
    #[error("drive {drive}: observation references frame {frame}, but only {frames} poses were given")]
    UnknownFrame { drive: usize, frame: usize, frames: usize },
    #[error("invalid refine config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub max_iters: usize,
    pub min_rel_improvement: f64,
    /// Back-projections farther than this many sigmas from the track center
    /// are left out of its mean.
    pub trim_sigma: f64,
    pub gn_max_iters: usize,
    /// Gauss-Newton stops when the update norm falls below this.
    pub gn_tolerance: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            min_rel_improvement: 1e-4,
            trim_sigma: 3.0,
            gn_max_iters: 25,
            gn_tolerance: 1e-8,
        }
    }
}

impl RefineConfig {
    pub fn check(&self) -> Result<(), RefineError> {
        if self.max_iters == 0 || self.gn_max_iters == 0 {
            return Err(RefineError::Config("iteration limits must be >= 1".into()));
        }
        for (name, v) in [
            ("min_rel_improvement", self.min_rel_improvement),
            ("trim_sigma", self.trim_sigma),
            ("gn_tolerance", self.gn_tolerance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RefineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Poses and feature observations of one drive.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveInput {
    pub poses: Vec<GlobalPose>,
    pub intrinsics: Intrinsics,
    pub observations: Vec<TrackObservation>,
}

/// World position seen along the observation ray at the observed depth.
pub fn back_project(pose: &GlobalPose, k: &Intrinsics, obs: &TrackObservation) -> EcefPosition {
    let cam = Vector3::new(
        (obs.pixel.x - k.cx) / k.fx * obs.depth,
        (obs.pixel.y - k.cy) / k.fy * obs.depth,
        obs.depth,
    );
    pose.from_local(&(CAMERA_FROM_LOCAL.transpose() * cam))
}

fn project(pose: &GlobalPose, k: &Intrinsics, world: &EcefPosition) -> Option<nalgebra::Vector2<f64>> {
    crate::validation::project(pose, k, world)
}

/// Mean of the points within `trim_sigma` sigmas of their medoid.
///
/// Sigma is estimated from the median squared distance to the medoid
/// (the median of a 3-dof chi-square is 2.366), which keeps the estimate
/// independent of how the coordinate axes are oriented.
pub fn robust_mean(points: &[Vector3<f64>], trim_sigma: f64) -> Vector3<f64> {
    assert!(!points.is_empty(), "robust mean of nothing");
    let medoid = points
        .iter()
        .map(|p| (p, points.iter().map(|q| (p - q).norm()).sum::<f64>()))
        .fold(None, |best: Option<(&Vector3<f64>, f64)>, (p, s)| match best {
            Some((_, b)) if b <= s => best,
            _ => Some((p, s)),
        })
        .map(|(p, _)| *p)
        .expect("non-empty");
    let d: Vec<f64> = points.iter().map(|p| (p - medoid).norm()).collect();
    let mut d2: Vec<f64> = d.iter().map(|x| x * x).collect();
    d2.sort_by(f64::total_cmp);
    let mid = d2.len() / 2;
    let median = if d2.len() % 2 == 1 {
        d2[mid]
    } else {
        0.5 * (d2[mid - 1] + d2[mid])
    };
    // per-axis sigma times sqrt(3): the RMS distance of an isotropic cloud
    let sigma = (3.0 * median / 2.366).sqrt();
    let limit = trim_sigma * sigma;
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for (p, di) in points.iter().zip(&d) {
        if *di <= limit {
            sum += p;
            n += 1;
        }
    }
    sum / n as f64
}

/// Observation handle: drive index and position in that drive's list.
type ObsRef = (usize, usize);

/// Observations of each feature across all drives, by feature id.
fn collect_tracks(drives: &[DriveInput]) -> BTreeMap<u64, Vec<ObsRef>> {
    let mut tracks: BTreeMap<u64, Vec<ObsRef>> = BTreeMap::new();
    for (d, drive) in drives.iter().enumerate() {
        for (i, o) in drive.observations.iter().enumerate() {
            tracks.entry(o.feature).or_default().push((d, i));
        }
    }
    tracks
}

/// Result of the map step.
#[derive(Clone, Debug, PartialEq)]
pub struct MapEstimate {
    pub world: BTreeMap<u64, EcefPosition>,
    /// Tracks without 2 observations from 2 distinct drives.
    pub dropped: usize,
}

/// Averages the back-projections of every cross-drive track.
pub fn e_step_average(
    drives: &[DriveInput],
    poses: &[Vec<GlobalPose>],
    cfg: &RefineConfig,
) -> Result<MapEstimate, RefineError> {
    let mut world = BTreeMap::new();
    let mut dropped = 0;
    for (feature, obs) in collect_tracks(drives) {
        let mut seen: Vec<usize> = obs.iter().map(|o| o.0).collect();
        seen.dedup();
        if obs.len() < 2 || seen.len() < 2 {
            dropped += 1;
            continue;
        }
        let points: Vec<Vector3<f64>> = obs
            .iter()
            .map(|&(d, i)| {
                let o = &drives[d].observations[i];
                back_project(&poses[d][o.frame], &drives[d].intrinsics, o).0
            })
            .collect();
        world.insert(feature, EcefPosition(robust_mean(&points, cfg.trim_sigma)));
    }
    if world.is_empty() {
        return Err(RefineError::InsufficientObservations { dropped });
    }
    Ok(MapEstimate { world, dropped })
}

/// Gauss-Newton fit of one pose to 2D-3D correspondences. Returns the pose
/// and the number of iterations, or `None` if it did not converge.
pub fn relocalize(
    pose: &GlobalPose,
    k: &Intrinsics,
    matches: &[(nalgebra::Vector2<f64>, EcefPosition)],
    cfg: &RefineConfig,
) -> Option<(GlobalPose, usize)> {
    let mut current = *pose;
    for it in 1..=cfg.gn_max_iters {
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for (pixel, world) in matches {
            let uv = project(&current, k, world)?;
            let r = uv - pixel;
            let jt = translation_jacobian(&current, k, world);
            let jr = orientation_jacobian(&current, k, world);
            let mut j = nalgebra::Matrix2x6::zeros();
            j.fixed_view_mut::<2, 3>(0, 0).copy_from(&jt);
            j.fixed_view_mut::<2, 3>(0, 3).copy_from(&jr);
            h += j.transpose() * j;
            g += j.transpose() * r;
        }
        let step = h.svd(true, true).solve(&(-g), 1e-12).ok()?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        // a step below tolerance is not applied, so an exact pose stays bit-identical
        if step.norm() < cfg.gn_tolerance {
            return Some((current, it));
        }
        current = current
            .translated(&step.fixed_rows::<3>(0).into_owned())
            .rotated_in_body(&step.fixed_rows::<3>(3).into_owned());
    }
    None
}

/// A frame the relocalization step left unchanged, and why.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameFlag {
    pub drive: usize,
    pub frame: usize,
    pub reason: String,
}

/// Re-fits every frame to `map`; frames that cannot be fit keep their pose.
pub fn m_step_relocalize(
    drives: &[DriveInput],
    poses: &[Vec<GlobalPose>],
    map: &BTreeMap<u64, EcefPosition>,
    cfg: &RefineConfig,
) -> (Vec<Vec<GlobalPose>>, Vec<FrameFlag>) {
    let mut out = poses.to_vec();
    let mut flags = Vec::new();
    for (d, drive) in drives.iter().enumerate() {
        let mut per_frame: Vec<Vec<(nalgebra::Vector2<f64>, EcefPosition)>> = vec![Vec::new(); poses[d].len()];
        for o in &drive.observations {
            if let Some(w) = map.get(&o.feature) {
                per_frame[o.frame].push((o.pixel, *w));
            }
        }
        for (f, matches) in per_frame.iter().enumerate() {
            let error = if matches.len() < 4 {
                RefineError::Underconstrained {
                    drive: d,
                    frame: f,
                    tracks: matches.len(),
                }
            } else {
                match relocalize(&poses[d][f], &drive.intrinsics, matches, cfg) {
                    Some((p, _)) => {
                        out[d][f] = p;
                        continue;
                    }
                    None => RefineError::NoConvergence { drive: d, frame: f },
                }
            };
            flags.push(FrameFlag {
                drive: d,
                frame: f,
                reason: error.to_string(),
            });
        }
    }
    (out, flags)
}

/// Mean pixel distance between observations and the projection of their
/// mapped feature; observations of unmapped features or behind the camera
/// are skipped.
pub fn mean_reprojection_error(
    drives: &[DriveInput],
    poses: &[Vec<GlobalPose>],
    map: &BTreeMap<u64, EcefPosition>,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (d, drive) in drives.iter().enumerate() {
        for o in &drive.observations {
            let Some(w) = map.get(&o.feature) else { continue };
            if let Some(uv) = project(&poses[d][o.frame], &drive.intrinsics, w) {
                sum += (uv - o.pixel).norm();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    ErrorIncrease,
    Converged,
}

/// One row of the iteration trace. Row 0 describes the input poses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_reprojection_px: f64,
    pub accepted: bool,
    pub tracks_mapped: usize,
    pub tracks_dropped: usize,
    pub frames_flagged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutcome {
    /// Corrected poses per drive, in input order.
    pub poses: Vec<Vec<GlobalPose>>,
    pub map: BTreeMap<u64, EcefPosition>,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
    /// Frames flagged during the last accepted relocalization.
    pub flags: Vec<FrameFlag>,
}

impl RefineOutcome {
    pub fn initial_error(&self) -> f64 {
        self.trace[0].mean_reprojection_px
    }

    pub fn final_error(&self) -> f64 {
        self.trace
            .iter()
            .rev()
            .find(|r| r.accepted)
            .map(|r| r.mean_reprojection_px)
            .expect("row 0 is always accepted")
    }
}

pub fn write_trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,mean_reprojection_px,accepted,tracks_mapped,tracks_dropped,frames_flagged\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.mean_reprojection_px, r.accepted, r.tracks_mapped, r.tracks_dropped, r.frames_flagged
        );
    }
    out
}

fn check_inputs(drives: &[DriveInput]) -> Result<(), RefineError> {
    for (d, drive) in drives.iter().enumerate() {
        if let Some(o) = drive.observations.iter().find(|o| o.frame >= drive.poses.len()) {
            return Err(RefineError::UnknownFrame {
                drive: d,
                frame: o.frame,
                frames: drive.poses.len(),
            });
        }
    }
    Ok(())
}

/// Runs the map/relocalize alternation from the input poses.
pub fn refine(drives: &[DriveInput], cfg: &RefineConfig) -> Result<RefineOutcome, RefineError> {
    cfg.check()?;
    check_inputs(drives)?;
    let mut poses: Vec<Vec<GlobalPose>> = drives.iter().map(|d| d.poses.clone()).collect();
    let mut map = e_step_average(drives, &poses, cfg)?;
    let mut error = mean_reprojection_error(drives, &poses, &map.world);
    let mut trace = vec![TraceRow {
        iteration: 0,
        mean_reprojection_px: error,
        accepted: true,
        tracks_mapped: map.world.len(),
        tracks_dropped: map.dropped,
        frames_flagged: 0,
    }];
    let mut flags = Vec::new();
    let mut stop = StopReason::MaxIterations;
    for iteration in 1..=cfg.max_iters {
        let (next_poses, next_flags) = m_step_relocalize(drives, &poses, &map.world, cfg);
        let next_map = e_step_average(drives, &next_poses, cfg)?;
        let next_error = mean_reprojection_error(drives, &next_poses, &next_map.world);
        let accepted = next_error <= error;
        trace.push(TraceRow {
            iteration,
            mean_reprojection_px: next_error,
            accepted,
            tracks_mapped: next_map.world.len(),
            tracks_dropped: next_map.dropped,
            frames_flagged: next_flags.len(),
        });
        if !accepted {
            stop = StopReason::ErrorIncrease;
            break;
        }
        let improvement = if error > 0.0 {
            (error - next_error) / error
        } else {
            0.0
        };
        poses = next_poses;
        map = next_map;
        flags = next_flags;
        error = next_error;
        if improvement < cfg.min_rel_improvement {
            stop = StopReason::Converged;
            break;
        }
    }
    let accepted: Vec<f64> = trace.iter().filter(|r| r.accepted).map(|r| r.mean_reprojection_px).collect();
    assert!(accepted.windows(2).all(|w| w[1] <= w[0]), "accepted error trace must not increase");
    Ok(RefineOutcome {
        poses,
        map: map.world,
        trace,
        stop,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::features::generate_feature_scene;
    use crate::testkit::SceneConfig;
    use nalgebra::{UnitQuaternion, Vector2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn scene_cfg(noise: bool) -> SceneConfig {
        let mut cfg = SceneConfig {
            feature_drives: 3,
            ..SceneConfig::default()
        };
        if !noise {
            cfg.pose_sigma_m = 0.0;
            cfg.pose_sigma_deg = 0.0;
            cfg.pixel_sigma = 0.0;
        }
        cfg
    }

    #[test]
    fn robust_mean_trivial_cases() {
        let p = Vector3::new(-2.7e6, -4.3e6, 3.8e6);
        assert_eq!(robust_mean(&[p, p, p], 3.0), p);
        let d = Vector3::new(0.3, -0.2, 0.1);
        let m = robust_mean(&[p + d, p - d], 3.0);
        assert!((m - p).norm() < 1e-9);
    }

    #[test]
    fn robust_mean_drops_a_ten_sigma_outlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 0.2).unwrap();
        let center = Vector3::new(1.0e6, -5.0e6, 3.5e6);
        let inliers: Vec<Vector3<f64>> = (0..15)
            .map(|_| center + Vector3::from_fn(|_, _| n.sample(&mut rng)))
            .collect();
        let inlier_mean = inliers.iter().sum::<Vector3<f64>>() / inliers.len() as f64;
        let mut all = inliers.clone();
        all.insert(4, center + Vector3::new(2.0, 0.0, 0.0));
        assert!((robust_mean(&all, 3.0) - inlier_mean).norm() < 1e-9);
    }

    fn frame_matches(pose: &GlobalPose, k: &Intrinsics, n: usize) -> Vec<(Vector2<f64>, EcefPosition)> {
        (0..n)
            .map(|i| {
                let a = i as f64;
                let local = Vector3::new(6.0 + 2.5 * a, -9.0 + (a * 1.7) % 18.0, -2.0 + (a * 0.9) % 3.5);
                let world = pose.from_local(&local);
                (crate::validation::project(pose, k, &world).unwrap(), world)
            })
            .collect()
    }

    #[test]
    fn relocalize_recovers_a_perturbed_pose() {
        let scene = generate_feature_scene(&scene_cfg(false)).unwrap();
        let truth = scene.drives[0].truth[0];
        let k = scene.intrinsics;
        let matches = frame_matches(&truth, &k, 20);
        let start = truth
            .translated(&Vector3::new(0.3, -0.3, 0.2758622))
            .rotated_in_body(&(Vector3::new(0.1, -0.2, 0.3).normalize() * 0.3f64.to_radians()));
        let (p, _) = relocalize(&start, &k, &matches, &RefineConfig::default()).unwrap();
        assert!((p.position.0 - truth.position.0).norm() < 1e-6);
        assert!(crate::frames::quat_angle_between(&p.orientation, &truth.orientation) < 1e-6);
        let (same, iters) = relocalize(&truth, &k, &matches, &RefineConfig::default()).unwrap();
        assert!((same.position.0 - truth.position.0).norm() < 1e-9);
        assert!(iters <= 2);
    }

    #[test]
    fn three_features_are_underconstrained() {
        let scene = generate_feature_scene(&scene_cfg(false)).unwrap();
        let pose = scene.drives[0].truth[0];
        let k = scene.intrinsics;
        let matches = frame_matches(&pose, &k, 3);
        let mut map = BTreeMap::new();
        let mut observations = Vec::new();
        for (i, (pixel, world)) in matches.iter().enumerate() {
            map.insert(i as u64, *world);
            observations.push(TrackObservation {
                frame: 0,
                feature: i as u64,
                pixel: *pixel,
                depth: crate::validation::camera_point(&pose, world).z,
            });
        }
        let drives = vec![DriveInput {
            poses: vec![pose],
            intrinsics: k,
            observations,
        }];
        let (out, flags) = m_step_relocalize(&drives, &[vec![pose]], &map, &RefineConfig::default());
        assert_eq!(out[0][0], pose);
        assert_eq!(flags.len(), 1);
        assert!(flags[0].reason.contains("need at least 4"));
    }

    #[test]
    fn noiseless_input_is_a_fixed_point() {
        let scene = generate_feature_scene(&scene_cfg(false)).unwrap();
        let out = refine(&scene.refine_inputs(), &RefineConfig::default()).unwrap();
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.stop, StopReason::Converged);
        assert!(out.trace[0].mean_reprojection_px < 1e-6);
        for (d, drive) in scene.drives.iter().enumerate() {
            for (a, b) in out.poses[d].iter().zip(&drive.poses) {
                assert!((a.position.0 - b.position.0).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn single_drive_has_no_cross_drive_tracks() {
        let scene = generate_feature_scene(&scene_cfg(true)).unwrap();
        let one = &scene.refine_inputs()[..1];
        assert!(matches!(
            refine(one, &RefineConfig::default()),
            Err(RefineError::InsufficientObservations { dropped }) if dropped > 0
        ));
    }

    #[test]
    fn three_drive_benchmark_halves_the_error() {
        let scene = generate_feature_scene(&scene_cfg(true)).unwrap();
        let out = refine(&scene.refine_inputs(), &RefineConfig::default()).unwrap();
        let accepted: Vec<f64> = out.trace.iter().filter(|r| r.accepted).map(|r| r.mean_reprojection_px).collect();
        assert!(accepted.windows(2).all(|w| w[1] <= w[0]));
        assert!(
            out.final_error() < 0.5 * out.initial_error(),
            "{} -> {}",
            out.initial_error(),
            out.final_error()
        );
    }

    #[test]
    fn rigid_transform_commutes_with_refinement() {
        let scene = generate_feature_scene(&scene_cfg(true)).unwrap();
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(0.4, -1.1, 0.7));
        let shift = Vector3::new(120.0, -35.0, 48.0);
        let move_pose = |p: &GlobalPose| GlobalPose {
            position: EcefPosition(rot * p.position.0 + shift),
            orientation: p.orientation * rot.inverse(),
            ..*p
        };
        let inputs = scene.refine_inputs();
        let moved: Vec<DriveInput> = inputs
            .iter()
            .map(|d| DriveInput {
                poses: d.poses.iter().map(move_pose).collect(),
                ..d.clone()
            })
            .collect();
        let cfg = RefineConfig::default();
        let a = refine(&inputs, &cfg).unwrap();
        let b = refine(&moved, &cfg).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        for (da, db) in a.poses.iter().zip(&b.poses) {
            for (pa, pb) in da.iter().zip(db) {
                let expect = move_pose(pa);
                assert!((expect.position.0 - pb.position.0).norm() < 1e-6);
                assert!(crate::frames::quat_angle_between(&expect.orientation, &pb.orientation) < 1e-6);
            }
        }
    }
}
