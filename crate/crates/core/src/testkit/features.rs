//! Synthetic camera scenes: landmarks on the road surface and on roadside
//! structure, seen by several drives passing along parallel lanes.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::drive::Road;
use super::oracles;
use super::scene::{SceneConfig, SceneError};
use crate::frames::{EcefPosition, GlobalPose, GnssTime};
use crate::refine::{DriveInput, TrackObservation};
use crate::validation::{Feature2D3D, Intrinsics};

/// Observations farther than this along the camera axis are not generated.
pub const MAX_DEPTH_M: f64 = 80.0;
pub const MIN_DEPTH_M: f64 = 1.0;

const WORLD_STREAM: u64 = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDrive {
    pub truth: Vec<GlobalPose>,
    /// Truth with pose noise applied; what a localizer would report.
    pub poses: Vec<GlobalPose>,
    pub tracks: Vec<TrackObservation>,
    /// The same observations paired with the true landmark positions.
    pub features: Vec<Feature2D3D>,
}

impl FeatureDrive {
    pub fn refine_input(&self, intrinsics: Intrinsics) -> DriveInput {
        DriveInput {
            poses: self.poses.clone(),
            intrinsics,
            observations: self.tracks.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScene {
    pub intrinsics: Intrinsics,
    pub landmarks: Vec<EcefPosition>,
    pub drives: Vec<FeatureDrive>,
}

impl FeatureScene {
    pub fn refine_inputs(&self) -> Vec<DriveInput> {
        self.drives.iter().map(|d| d.refine_input(self.intrinsics)).collect()
    }
}

fn landmarks(cfg: &SceneConfig, road: &Road) -> Vec<EcefPosition> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(WORLD_STREAM);
    let length = cfg.frames as f64 * cfg.frame_spacing_m + 0.75 * MAX_DEPTH_M;
    let half_width = 0.5 * cfg.feature_drives as f64 * cfg.lane_offset_m + 4.0;
    (0..cfg.features)
        .map(|i| {
            let along = rng.random_range(MIN_DEPTH_M + 2.0..length);
            // road surface lies camera_height below the start point
            if i % 2 == 0 {
                let right = rng.random_range(-half_width..half_width);
                road.point(along, right, cfg.camera_height_m)
            } else {
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let right = side * rng.random_range(half_width + 1.0..half_width + 6.0);
                let up = rng.random_range(0.0..8.0);
                road.point(along, right, cfg.camera_height_m - up)
            }
        })
        .collect()
}

fn truth_poses(cfg: &SceneConfig, road: &Road, drive: usize) -> Result<Vec<GlobalPose>, SceneError> {
    let lateral = (drive as f64 - (cfg.feature_drives as f64 - 1.0) / 2.0) * cfg.lane_offset_m;
    let start = cfg.start_tow + cfg.drive_spacing_s * drive as f64;
    (0..cfg.frames)
        .map(|i| {
            let time = GnssTime::new(cfg.week as i64, start + i as f64)
                .map_err(|e| SceneError::Config(e.to_string()))?;
            let position = road.point(i as f64 * cfg.frame_spacing_m, lateral, 0.0);
            Ok(GlobalPose::new(time, position, road.orientation))
        })
        .collect()
}

/// Camera scene for `cfg.feature_drives` drives: `cfg.frames` frames each,
/// one per second, and `cfg.features` landmarks. Pixel noise is added after
/// projection through the true pose; pose noise is independent per frame.
pub fn generate_feature_scene(cfg: &SceneConfig) -> Result<FeatureScene, SceneError> {
    cfg.check()?;
    if cfg.feature_drives == 0 {
        return Err(SceneError::Config("feature_drives must be >= 1".into()));
    }
    let intrinsics = Intrinsics {
        fx: cfg.fx,
        fy: cfg.fy,
        cx: cfg.cx,
        cy: cfg.cy,
    };
    let road = Road::of(cfg);
    let landmarks = landmarks(cfg, &road);
    let pos_noise = Normal::new(0.0, cfg.pose_sigma_m).expect("finite sigma");
    let rot_noise = Normal::new(0.0, cfg.pose_sigma_deg.to_radians()).expect("finite sigma");
    let pix_noise = Normal::new(0.0, cfg.pixel_sigma).expect("finite sigma");
    let mut drives = Vec::with_capacity(cfg.feature_drives);
    for d in 0..cfg.feature_drives {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(WORLD_STREAM + 1 + d as u64);
        let truth = truth_poses(cfg, &road, d)?;
        let mut poses = Vec::with_capacity(truth.len());
        let mut tracks = Vec::new();
        let mut features = Vec::new();
        for (frame, pose) in truth.iter().enumerate() {
            let dt = Vector3::from_fn(|_, _| pos_noise.sample(&mut rng));
            let dr = Vector3::from_fn(|_, _| rot_noise.sample(&mut rng));
            poses.push(pose.translated(&dt).rotated_in_body(&dr));
            for (id, world) in landmarks.iter().enumerate() {
                let local = pose.to_local(world);
                let cam = Vector3::new(local.y, local.z, local.x);
                if !(MIN_DEPTH_M..=MAX_DEPTH_M).contains(&cam.z) {
                    continue;
                }
                let (u, v) = oracles::pinhole(cfg.fx, cfg.fy, cfg.cx, cfg.cy, &cam);
                if !(0.0..cfg.image_width).contains(&u) || !(0.0..cfg.image_height).contains(&v) {
                    continue;
                }
                let pixel = Vector2::new(u + pix_noise.sample(&mut rng), v + pix_noise.sample(&mut rng));
                tracks.push(TrackObservation {
                    frame,
                    feature: id as u64,
                    pixel,
                    depth: cam.z,
                });
                features.push(Feature2D3D {
                    frame,
                    feature: id as u64,
                    pixel,
                    world: *world,
                    intrinsics,
                });
            }
        }
        drives.push(FeatureDrive {
            truth,
            poses,
            tracks,
            features,
        });
    }
    Ok(FeatureScene {
        intrinsics,
        landmarks,
        drives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::reprojection_residuals;

    fn cfg() -> SceneConfig {
        SceneConfig {
            feature_drives: 3,
            pose_sigma_m: 0.0,
            pose_sigma_deg: 0.0,
            pixel_sigma: 0.0,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn zero_noise_has_zero_residuals() {
        let scene = generate_feature_scene(&cfg()).unwrap();
        for drive in &scene.drives {
            assert_eq!(drive.poses, drive.truth);
            for (f, pose) in drive.truth.iter().enumerate() {
                let frame: Vec<_> = drive.features.iter().filter(|x| x.frame == f).cloned().collect();
                assert!(frame.len() >= 20, "frame {f} sees {}", frame.len());
                for r in reprojection_residuals(pose, &frame) {
                    assert!(r.unwrap().norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let noisy = SceneConfig {
            feature_drives: 2,
            ..SceneConfig::default()
        };
        assert_eq!(generate_feature_scene(&noisy).unwrap(), generate_feature_scene(&noisy).unwrap());
        let other = generate_feature_scene(&SceneConfig { seed: 9, ..noisy.clone() }).unwrap();
        assert_ne!(other, generate_feature_scene(&noisy).unwrap());
    }

    #[test]
    fn no_feature_drives_is_rejected() {
        assert!(generate_feature_scene(&SceneConfig::default()).is_err());
    }
}
