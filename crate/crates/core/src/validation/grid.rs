//! Altitude consistency over repeated drives of the same road.
//!
//! Fixes go into square cells on the east/north axes of a tangent plane.
//! Assuming the road height is constant inside a cell, the spread of fix
//! altitudes around the cell mean measures altitude error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ValidationError;
use crate::frames::{ecef_to_geodetic, EcefPosition, GeodeticPosition, TangentPlane};

/// Histogram bin width [m] for reports and overlays.
pub const HISTOGRAM_BIN_M: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Tangent-plane anchor; cell (0, 0) has its south-west corner here.
    pub origin: GeodeticPosition,
    /// [m]
    pub cell_size: f64,
    pub min_passes: usize,
    pub min_distinct_drives: usize,
}

impl GridSpec {
    pub fn new(origin: GeodeticPosition) -> Self {
        Self {
            origin,
            cell_size: 5.0,
            min_passes: 3,
            min_distinct_drives: 2,
        }
    }

    pub fn check(&self) -> Result<(), ValidationError> {
        let o = &self.origin;
        if !(o.lat_deg.is_finite() && o.lon_deg.is_finite() && o.height.is_finite())
            || o.lat_deg.abs() > 90.0
        {
            return Err(ValidationError::InvalidSpec(format!("bad origin {o:?}")));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(ValidationError::InvalidSpec(format!("cell_size {} must be > 0", self.cell_size)));
        }
        if self.min_passes < 2 {
            return Err(ValidationError::InvalidSpec("min_passes must be >= 2".into()));
        }
        if self.min_distinct_drives < 1 {
            return Err(ValidationError::InvalidSpec("min_distinct_drives must be >= 1".into()));
        }
        Ok(())
    }
}

/// A position fix tagged with the drive it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveFix {
    pub drive: u32,
    pub position: EcefPosition,
    pub vdop: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    /// Cell index along east and north.
    pub east: i64,
    pub north: i64,
    pub n_fixes: usize,
    pub n_drives: usize,
    /// [m]
    pub mean_alt: f64,
    /// Altitude minus cell mean [m], in ascending order.
    pub alt_deviations: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Percentiles of the absolute altitude deviation [m].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p68: f64,
    pub p95: f64,
    pub p99: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub spec: GridSpec,
    pub fixes_total: usize,
    pub fixes_used: usize,
    pub cells_total: usize,
    /// Qualified cells, ordered by (east, north).
    pub cells: Vec<CellStats>,
    /// Root mean square altitude deviation [m].
    pub rmse: f64,
    /// Per-fix altitude sigma with the de-meaning bias removed:
    /// `sqrt(sum dev^2 / sum (n_cell - 1))` [m].
    pub sigma_corrected: f64,
    pub percentiles: Percentiles,
    pub histogram: Vec<HistogramBin>,
    /// `sigma_corrected` divided by the RMS VDOP of the used fixes, when every
    /// used fix has a VDOP.
    pub implied_uere: Option<f64>,
}

impl GridReport {
    pub fn deviations(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().flat_map(|c| c.alt_deviations.iter().copied())
    }
}

/// ECEF centroid of the fixes as a geodetic position. The summation order
/// is fixed by sorting, so the result does not depend on input order.
pub fn centroid_origin(fixes: &[DriveFix]) -> Result<GeodeticPosition, ValidationError> {
    if fixes.is_empty() {
        return Err(ValidationError::NoQualifiedCells);
    }
    let mut points: Vec<[f64; 3]> = fixes.iter().map(|f| [f.position.x(), f.position.y(), f.position.z()]).collect();
    points.sort_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    let n = points.len() as f64;
    let mut sum = [0.0; 3];
    for p in &points {
        for k in 0..3 {
            sum[k] += p[k];
        }
    }
    ecef_to_geodetic(&EcefPosition::new(sum[0] / n, sum[1] / n, sum[2] / n))
        .map_err(|e| ValidationError::InvalidSpec(e.to_string()))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    // nearest rank
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn bin_of(d: f64) -> i64 {
    (d / HISTOGRAM_BIN_M).floor() as i64
}

fn histogram(values: impl Iterator<Item = f64>) -> BTreeMap<i64, usize> {
    let mut bins = BTreeMap::new();
    for d in values {
        *bins.entry(bin_of(d)).or_insert(0) += 1;
    }
    bins
}

fn bin_edges(i: i64) -> (f64, f64) {
    (i as f64 * HISTOGRAM_BIN_M, (i + 1) as f64 * HISTOGRAM_BIN_M)
}

pub fn grid_altitude_report(fixes: &[DriveFix], spec: &GridSpec) -> Result<GridReport, ValidationError> {
    spec.check()?;
    grid_altitude_report_in(&TangentPlane::at(&spec.origin), fixes, spec)
}

/// As [`grid_altitude_report`] with an explicit tangent plane; altitude is
/// `spec.origin.height` minus the plane's down coordinate.
pub fn grid_altitude_report_in(
    plane: &TangentPlane,
    fixes: &[DriveFix],
    spec: &GridSpec,
) -> Result<GridReport, ValidationError> {
    spec.check()?;
    let mut cells: BTreeMap<(i64, i64), Vec<(u32, f64, Option<f64>)>> = BTreeMap::new();
    for f in fixes {
        let ned = plane.to_ned(&f.position);
        if !ned.iter().all(|v| v.is_finite()) {
            continue;
        }
        let key = (
            (ned.y / spec.cell_size).floor() as i64,
            (ned.x / spec.cell_size).floor() as i64,
        );
        cells.entry(key).or_default().push((f.drive, spec.origin.height - ned.z, f.vdop));
    }

    let cells_total = cells.len();
    let mut used = Vec::new();
    let mut vdops = Vec::new();
    let mut dof = 0usize;
    for ((east, north), mut members) in cells {
        members.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut drives: Vec<u32> = members.iter().map(|m| m.0).collect();
        drives.sort_unstable();
        drives.dedup();
        if members.len() < spec.min_passes || drives.len() < spec.min_distinct_drives {
            continue;
        }
        let mean = members.iter().map(|m| m.1).sum::<f64>() / members.len() as f64;
        vdops.extend(members.iter().map(|m| m.2));
        dof += members.len() - 1;
        used.push(CellStats {
            east,
            north,
            n_fixes: members.len(),
            n_drives: drives.len(),
            mean_alt: mean,
            alt_deviations: members.iter().map(|m| m.1 - mean).collect(),
        });
    }
    if used.is_empty() {
        return Err(ValidationError::NoQualifiedCells);
    }

    let devs: Vec<f64> = used.iter().flat_map(|c| c.alt_deviations.iter().copied()).collect();
    let n = devs.len();
    let sum_sq: f64 = devs.iter().map(|d| d * d).sum();
    let sigma_corrected = (sum_sq / dof as f64).sqrt();
    let mut abs: Vec<f64> = devs.iter().map(|d| d.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let implied_uere = vdops.iter().copied().collect::<Option<Vec<f64>>>().and_then(|v| {
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        (rms > 0.0).then(|| sigma_corrected / rms)
    });
    Ok(GridReport {
        spec: *spec,
        fixes_total: fixes.len(),
        fixes_used: n,
        cells_total,
        rmse: (sum_sq / n as f64).sqrt(),
        sigma_corrected,
        percentiles: Percentiles {
            p50: percentile(&abs, 0.50),
            p68: percentile(&abs, 0.68),
            p95: percentile(&abs, 0.95),
            p99: percentile(&abs, 0.99),
        },
        histogram: histogram(devs.iter().copied())
            .into_iter()
            .map(|(i, count)| {
                let (left, right) = bin_edges(i);
                HistogramBin { left, right, count }
            })
            .collect(),
        cells: used,
        implied_uere,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayBin {
    pub left: f64,
    pub right: f64,
    pub count_candidate: usize,
    pub count_baseline: usize,
}

/// Candidate-versus-baseline altitude error comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// What the RMSE values measure.
    pub metric: String,
    pub rmse_candidate: f64,
    pub rmse_baseline: f64,
    /// `1 - rmse_candidate / rmse_baseline`
    pub reduction_fraction: f64,
    pub overlay: Vec<OverlayBin>,
}

pub fn compare_solutions(candidate: &GridReport, baseline: &GridReport) -> Result<Comparison, ValidationError> {
    if candidate.spec != baseline.spec {
        return Err(ValidationError::SpecMismatch(format!(
            "{:?} vs {:?}",
            candidate.spec, baseline.spec
        )));
    }
    let a = histogram(candidate.deviations());
    let b = histogram(baseline.deviations());
    let mut keys: Vec<i64> = a.keys().chain(b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let overlay = keys
        .into_iter()
        .map(|i| {
            let (left, right) = bin_edges(i);
            OverlayBin {
                left,
                right,
                count_candidate: a.get(&i).copied().unwrap_or(0),
                count_baseline: b.get(&i).copied().unwrap_or(0),
            }
        })
        .collect();
    let reduction = if candidate.rmse == baseline.rmse {
        0.0
    } else {
        1.0 - candidate.rmse / baseline.rmse
    };
    Ok(Comparison {
        metric: "altitude_rmse_m".into(),
        rmse_candidate: candidate.rmse,
        rmse_baseline: baseline.rmse,
        reduction_fraction: reduction,
        overlay,
    })
}
