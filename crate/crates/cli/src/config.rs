//! Run configuration file (TOML). Every key is optional; unknown keys are
//! rejected. Command-line flags override the file.
//!
//! ```toml
//! elevation_mask_deg = 10.0
//! cn0_floor = 20.0
//! sigma0 = 1.0
//! ionosphere = true
//! troposphere = true
//! correction_passes = 5
//! leap_seconds = 18.0
//! cache_dir = "/var/cache/rawgnss"
//! base_url = "https://cddis.nasa.gov/archive/gnss/data/daily"
//!
//! [filter]
//! accel_sigma = 2.0
//! gate_sigma = 5.0
//!
//! [grid]
//! cell_size = 5.0
//! min_passes = 3
//! min_distinct_drives = 2
//!
//! [refine]
//! max_iters = 10
//! ```

use std::path::{Path, PathBuf};

use rawgnss::ephemeris::{FetchConfig, ENV_BASE_URL, ENV_CACHE_DIR};
use rawgnss::measurements::MeasurementConfig;
use rawgnss::refine::RefineConfig;
use rawgnss::solver::{FilterConfig, SolveConfig, SolveMode};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub cell_size: f64,
    pub min_passes: usize,
    pub min_distinct_drives: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self {
            cell_size: 5.0,
            min_passes: 3,
            min_distinct_drives: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub elevation_mask_deg: f64,
    pub cn0_floor: f64,
    pub sigma0: f64,
    pub ionosphere: bool,
    pub troposphere: bool,
    pub correction_passes: usize,
    pub leap_seconds: f64,
    pub cache_dir: Option<PathBuf>,
    pub base_url: Option<String>,
    pub filter: FilterConfig,
    pub grid: GridBlock,
    pub refine: RefineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = MeasurementConfig::default();
        let s = SolveConfig::default();
        Self {
            elevation_mask_deg: m.elevation_mask_deg,
            cn0_floor: m.cn0_floor,
            sigma0: m.sigma0,
            ionosphere: m.ionosphere,
            troposphere: m.troposphere,
            correction_passes: s.correction_passes,
            leap_seconds: s.leap_seconds,
            cache_dir: None,
            base_url: None,
            filter: s.filter,
            grid: GridBlock::default(),
            refine: RefineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CliError> {
        self.measurement().check().map_err(CliError::Config)?;
        self.filter.check().map_err(|e| CliError::Config(format!("filter: {e}")))?;
        if !(1..=20).contains(&self.correction_passes) {
            return Err(CliError::Config("correction_passes must be in [1, 20]".into()));
        }
        if !(0.0..=100.0).contains(&self.leap_seconds) {
            return Err(CliError::Config("leap_seconds must be in [0, 100]".into()));
        }
        let g = &self.grid;
        if !(g.cell_size.is_finite() && g.cell_size > 0.0) || g.min_passes < 2 || g.min_distinct_drives < 1 {
            return Err(CliError::Config(format!(
                "grid: need cell_size > 0, min_passes >= 2, min_distinct_drives >= 1, got {g:?}"
            )));
        }
        self.refine.check().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn measurement(&self) -> MeasurementConfig {
        MeasurementConfig {
            elevation_mask_deg: self.elevation_mask_deg,
            cn0_floor: self.cn0_floor,
            sigma0: self.sigma0,
            ionosphere: self.ionosphere,
            troposphere: self.troposphere,
        }
    }

    pub fn solve(&self, mode: SolveMode) -> SolveConfig {
        SolveConfig {
            mode,
            measurement: self.measurement(),
            filter: self.filter.clone(),
            correction_passes: self.correction_passes,
            leap_seconds: self.leap_seconds,
            ..SolveConfig::default()
        }
    }

    /// Flag, then environment, then this file, then the built-in default.
    pub fn fetch(&self, cache_dir: Option<PathBuf>, base_url: Option<String>) -> FetchConfig {
        let fallback = FetchConfig::from_env();
        let cache_dir = cache_dir
            .or_else(|| std::env::var_os(ENV_CACHE_DIR).map(PathBuf::from))
            .or_else(|| self.cache_dir.clone())
            .unwrap_or(fallback.cache_dir);
        let base_url = base_url
            .or_else(|| std::env::var(ENV_BASE_URL).ok())
            .or_else(|| self.base_url.clone())
            .unwrap_or(fallback.base_url);
        FetchConfig::new(cache_dir, base_url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        assert!(toml::from_str::<RunConfig>("elevation_mask = 5").is_err());
        assert!(toml::from_str::<RunConfig>("[grid]\ncell = 5").is_err());
        let cfg: RunConfig = toml::from_str("elevation_mask_deg = 95.0").unwrap();
        assert!(cfg.check().is_err());
        let cfg: RunConfig = toml::from_str("[filter]\ngate_sigma = 0.0").unwrap();
        assert!(cfg.check().is_err());
        let cfg: RunConfig = toml::from_str("cn0_floor = 25.0\n[grid]\ncell_size = 2.5").unwrap();
        cfg.check().unwrap();
        assert_eq!(cfg.grid.cell_size, 2.5);
        assert_eq!(cfg.grid.min_passes, 3);
    }
}
