//! Fix CSV: `week,tow,ecef_x,ecef_y,ecef_z,vx,vy,vz,clock_bias_m,hdop,vdop,n_sats,mode`.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::frames::{EcefPosition, FrameError, GnssTime};

pub const FIX_HEADER: &str = "week,tow,ecef_x,ecef_y,ecef_z,vx,vy,vz,clock_bias_m,hdop,vdop,n_sats,mode";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    Wls,
    Kf,
}

impl SolveMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveMode::Wls => "wls",
            SolveMode::Kf => "kf",
        }
    }
}

impl std::str::FromStr for SolveMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wls" => Ok(SolveMode::Wls),
            "kf" => Ok(SolveMode::Kf),
            other => Err(format!("unknown mode {other:?} (expected wls or kf)")),
        }
    }
}

/// One output row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fix {
    pub time: GnssTime,
    pub position: EcefPosition,
    pub velocity: Vector3<f64>,
    pub clock_bias: f64,
    pub hdop: Option<f64>,
    pub vdop: Option<f64>,
    pub n_sats: usize,
    pub mode: SolveMode,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_fix_csv(fixes: &[Fix]) -> String {
    let mut out = format!("{FIX_HEADER}\n");
    for f in fixes {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f.time.week(),
            f.time.tow(),
            f.position.x(),
            f.position.y(),
            f.position.z(),
            f.velocity.x,
            f.velocity.y,
            f.velocity.z,
            f.clock_bias,
            opt(f.hdop),
            opt(f.vdop),
            f.n_sats,
            f.mode.as_str()
        );
    }
    out
}

fn parse_fix_line(line: &str) -> Result<Fix, String> {
    let f: Vec<&str> = line.split(',').map(str::trim).collect();
    if f.len() != 13 {
        return Err(format!("expected 13 fields, found {}", f.len()));
    }
    let num = |i: usize| -> Result<f64, String> {
        let v: f64 = f[i].parse().map_err(|_| format!("field {}: not a number: {:?}", i + 1, f[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("field {}: non-finite", i + 1))
        }
    };
    let opt = |i: usize| if f[i].is_empty() { Ok(None) } else { num(i).map(Some) };
    let week: i64 = f[0].parse().map_err(|_| "week: not an integer")?;
    let time = GnssTime::new(week, num(1)?).map_err(|e| e.to_string())?;
    Ok(Fix {
        time,
        position: EcefPosition::new(num(2)?, num(3)?, num(4)?),
        velocity: Vector3::new(num(5)?, num(6)?, num(7)?),
        clock_bias: num(8)?,
        hdop: opt(9)?,
        vdop: opt(10)?,
        n_sats: f[11].parse().map_err(|_| "n_sats: not an integer")?,
        mode: f[12].parse()?,
    })
}

/// Reads a fix CSV. The header line and blank lines are skipped.
pub fn read_fix_csv(text: &str) -> Result<Vec<Fix>, FrameError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("week") {
            continue;
        }
        out.push(parse_fix_line(line).map_err(|reason| FrameError::PoseRecord { line: i + 1, reason })?);
    }
    Ok(out)
}
