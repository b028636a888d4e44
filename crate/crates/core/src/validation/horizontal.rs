//! Horizontal error predicted from DOP.

use serde::{Deserialize, Serialize};

use super::ValidationError;
use crate::solver::Fix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalEstimate {
    /// [m]
    pub north_rmse: f64,
    /// [m]
    pub east_rmse: f64,
    pub uere: f64,
    pub fixes: usize,
}

/// Per fix `sigma_h = hdop * uere`, split evenly between north and east;
/// the outputs are RMS values over all fixes.
pub fn horizontal_error_estimate(fixes: &[Fix], uere: f64) -> Result<HorizontalEstimate, ValidationError> {
    let mut sum = 0.0;
    for (index, f) in fixes.iter().enumerate() {
        let hdop = f.hdop.ok_or(ValidationError::MissingDop { index })?;
        let s = hdop * uere;
        sum += s * s / 2.0;
    }
    let rms = if fixes.is_empty() {
        0.0
    } else {
        (sum / fixes.len() as f64).sqrt()
    };
    Ok(HorizontalEstimate {
        north_rmse: rms,
        east_rmse: rms,
        uere,
        fixes: fixes.len(),
    })
}
