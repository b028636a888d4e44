//! Feature file: an intrinsics line `fx,fy,cx,cy`, then one observation per
//! line `frame_id,feature_id,u_px,v_px,ecef_x,ecef_y,ecef_z`. `frame_id` is
//! the 0-based row of the matching pose file. A column-name line after the
//! intrinsics is accepted and skipped.

use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{Intrinsics, ValidationError};
use crate::frames::EcefPosition;

pub(crate) const FEATURE_COLUMNS: &str = "frame_id,feature_id,u_px,v_px,ecef_x,ecef_y,ecef_z";

/// One observed feature with a known world point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature2D3D {
    pub frame: usize,
    pub feature: u64,
    /// Observed pixel (u, v).
    pub pixel: Vector2<f64>,
    pub world: EcefPosition,
    pub intrinsics: Intrinsics,
}

fn parse_err(line: usize, reason: impl Into<String>) -> ValidationError {
    ValidationError::Parse {
        line,
        reason: reason.into(),
    }
}

pub(crate) fn number(field: &str, line: usize, name: &str) -> Result<f64, ValidationError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{name}: not a number: {:?}", field.trim())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("{name}: not finite")))
    }
}

pub(crate) fn index(field: &str, line: usize, name: &str) -> Result<u64, ValidationError> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{name}: not a non-negative integer: {:?}", field.trim())))
}

/// Reads the intrinsics line and returns it with the remaining data lines
/// (1-based line numbers), skipping blank lines and an optional column-name line.
pub(crate) fn split_header<'a>(
    text: &'a str,
    columns: &str,
) -> Result<(Intrinsics, Vec<(usize, &'a str)>), ValidationError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, first) = lines.next().ok_or_else(|| parse_err(1, "missing intrinsics line"))?;
    let f: Vec<&str> = first.split(',').collect();
    if f.len() != 4 {
        return Err(parse_err(n, "intrinsics line must be fx,fy,cx,cy"));
    }
    let k = Intrinsics {
        fx: number(f[0], n, "fx")?,
        fy: number(f[1], n, "fy")?,
        cx: number(f[2], n, "cx")?,
        cy: number(f[3], n, "cy")?,
    };
    k.check().map_err(|e| parse_err(n, e.to_string()))?;
    let rest = lines.filter(|(_, l)| *l != columns).collect();
    Ok((k, rest))
}

pub fn read_feature_file(text: &str) -> Result<(Intrinsics, Vec<Feature2D3D>), ValidationError> {
    let (k, lines) = split_header(text, FEATURE_COLUMNS)?;
    let mut out = Vec::with_capacity(lines.len());
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(n, format!("expected 7 fields, found {}", f.len())));
        }
        out.push(Feature2D3D {
            frame: index(f[0], n, "frame_id")? as usize,
            feature: index(f[1], n, "feature_id")?,
            pixel: Vector2::new(number(f[2], n, "u_px")?, number(f[3], n, "v_px")?),
            world: EcefPosition::new(
                number(f[4], n, "ecef_x")?,
                number(f[5], n, "ecef_y")?,
                number(f[6], n, "ecef_z")?,
            ),
            intrinsics: k,
        });
    }
    Ok((k, out))
}

pub fn write_feature_file(k: &Intrinsics, features: &[Feature2D3D]) -> String {
    let mut out = format!("{},{},{},{}\n{FEATURE_COLUMNS}\n", k.fx, k.fy, k.cx, k.cy);
    for f in features {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f.frame,
            f.feature,
            f.pixel.x,
            f.pixel.y,
            f.world.x(),
            f.world.y(),
            f.world.z()
        );
    }
    out
}
