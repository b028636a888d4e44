//! Declarative description of a synthetic scene.
//!
//! The config is a flat TOML table; every key is optional and unknown keys
//! are rejected. GNSS keys describe straight constant-velocity drives over
//! the same road; `feature_*`/camera keys describe the camera scene, which
//! is generated only when `feature_drives > 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Config(String),
    #[error("only {visible} satellites stay above {cutoff_deg} deg for the whole scene")]
    TooFewSatellites { visible: usize, cutoff_deg: f64 },
    #[error(transparent)]
    Ephemeris(#[from] crate::ephemeris::EphemerisError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub week: u32,
    /// Start of the first drive, seconds of week.
    pub start_tow: f64,
    pub drives: usize,
    /// Start-to-start spacing between drives [s].
    pub drive_spacing_s: f64,
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Road start point.
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height_m: f64,
    /// Road direction, clockwise from north.
    pub heading_deg: f64,
    pub speed_mps: f64,
    /// Constellation size (6 orbital planes, 55 deg inclination).
    pub satellites: usize,
    /// Only satellites above this elevation during every drive are observed.
    pub elevation_cutoff_deg: f64,
    pub pseudorange_sigma_m: f64,
    pub doppler_sigma_hz: f64,
    pub ionosphere: bool,
    pub troposphere: bool,
    /// Initial receiver clock offsets are uniform in +-this [m].
    pub clock_bias_m: f64,
    pub clock_drift_mps: f64,

    pub feature_drives: usize,
    pub features: usize,
    pub frames: usize,
    pub frame_spacing_m: f64,
    /// Lateral spacing between the paths of successive camera drives.
    pub lane_offset_m: f64,
    pub camera_height_m: f64,
    pub pose_sigma_m: f64,
    pub pose_sigma_deg: f64,
    pub pixel_sigma: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            week: 2035,
            start_tow: 7920.0,
            drives: 4,
            drive_spacing_s: 600.0,
            duration_s: 120.0,
            rate_hz: 10.0,
            lat_deg: 37.4,
            lon_deg: -122.1,
            height_m: 30.0,
            heading_deg: 30.0,
            speed_mps: 25.0,
            satellites: 24,
            elevation_cutoff_deg: 15.0,
            pseudorange_sigma_m: 2.0,
            doppler_sigma_hz: 0.5,
            ionosphere: true,
            troposphere: true,
            clock_bias_m: 100.0,
            clock_drift_mps: 0.1,
            feature_drives: 0,
            features: 300,
            frames: 20,
            frame_spacing_m: 2.0,
            lane_offset_m: 1.5,
            camera_height_m: 1.5,
            pose_sigma_m: 1.0,
            pose_sigma_deg: 0.25,
            pixel_sigma: 1.0,
            fx: 800.0,
            fy: 800.0,
            cx: 640.0,
            cy: 360.0,
            image_width: 1280.0,
            image_height: 720.0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), SceneError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(SceneError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), SceneError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SceneError::Config(format!("{name} must be >= 0, got {v}")))
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self, SceneError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SceneError::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene config serializes")
    }

    pub fn check(&self) -> Result<(), SceneError> {
        positive("duration_s", self.duration_s)?;
        positive("rate_hz", self.rate_hz)?;
        positive("drive_spacing_s", self.drive_spacing_s)?;
        non_negative("speed_mps", self.speed_mps)?;
        non_negative("pseudorange_sigma_m", self.pseudorange_sigma_m)?;
        non_negative("doppler_sigma_hz", self.doppler_sigma_hz)?;
        non_negative("clock_bias_m", self.clock_bias_m)?;
        non_negative("pose_sigma_m", self.pose_sigma_m)?;
        non_negative("pose_sigma_deg", self.pose_sigma_deg)?;
        non_negative("pixel_sigma", self.pixel_sigma)?;
        for (name, v) in [
            ("frame_spacing_m", self.frame_spacing_m),
            ("camera_height_m", self.camera_height_m),
            ("fx", self.fx),
            ("fy", self.fy),
            ("cx", self.cx),
            ("cy", self.cy),
            ("image_width", self.image_width),
            ("image_height", self.image_height),
        ] {
            positive(name, v)?;
        }
        if self.drives == 0 {
            return Err(SceneError::Config("drives must be >= 1".into()));
        }
        if !(-90.0..=90.0).contains(&self.lat_deg) || !self.lon_deg.is_finite() {
            return Err(SceneError::Config("road start outside the globe".into()));
        }
        if !(-500.0..=9000.0).contains(&self.height_m) {
            return Err(SceneError::Config(format!("height_m {} out of range", self.height_m)));
        }
        if !(0.0..604800.0).contains(&self.start_tow) {
            return Err(SceneError::Config(format!("start_tow {} out of range", self.start_tow)));
        }
        if !(4..=32).contains(&self.satellites) {
            return Err(SceneError::Config("satellites must be within 4..=32".into()));
        }
        if !(0.0..90.0).contains(&self.elevation_cutoff_deg) {
            return Err(SceneError::Config("elevation_cutoff_deg must be within [0, 90)".into()));
        }
        let span = self.drive_spacing_s * (self.drives - 1) as f64 + self.duration_s;
        if span > 6.0 * 3600.0 {
            return Err(SceneError::Config(format!(
                "drives span {span} s, beyond one ephemeris fit window"
            )));
        }
        if self.start_tow + span >= 604800.0 {
            return Err(SceneError::Config("drives cross a week boundary".into()));
        }
        if self.feature_drives > 0 && (self.frames < 1 || self.features < 4) {
            return Err(SceneError::Config("camera scene needs frames >= 1 and features >= 4".into()));
        }
        Ok(())
    }

    /// Epochs per drive.
    pub fn epochs(&self) -> usize {
        (self.duration_s * self.rate_hz).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = SceneConfig {
            seed: 9,
            drives: 2,
            ..Default::default()
        };
        assert_eq!(SceneConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(SceneConfig::from_toml("").unwrap(), SceneConfig::default());
        assert!(SceneConfig::from_toml("seed = 3\nspeed = 4.0\n").is_err());
        assert!(SceneConfig::from_toml("rate_hz = 0.0").is_err());
        assert!(SceneConfig::from_toml("drives = 0").is_err());
    }
}
