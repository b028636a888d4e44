//! Track file: the intrinsics line `fx,fy,cx,cy`, then one observation per
//! line `frame_id,feature_id,u_px,v_px,depth_m`. Depth is measured along the
//! camera forward axis; `frame_id` is the 0-based row of the drive's pose file.

use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::validation::features::{index, number, split_header};
use crate::validation::{Intrinsics, ValidationError};

pub(crate) const TRACK_COLUMNS: &str = "frame_id,feature_id,u_px,v_px,depth_m";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub frame: usize,
    pub feature: u64,
    pub pixel: Vector2<f64>,
    /// [m], positive
    pub depth: f64,
}

pub fn read_track_file(text: &str) -> Result<(Intrinsics, Vec<TrackObservation>), ValidationError> {
    let (k, lines) = split_header(text, TRACK_COLUMNS)?;
    let mut out = Vec::with_capacity(lines.len());
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(ValidationError::Parse {
                line: n,
                reason: format!("expected 5 fields, found {}", f.len()),
            });
        }
        let depth = number(f[4], n, "depth_m")?;
        if depth <= 0.0 {
            return Err(ValidationError::Parse {
                line: n,
                reason: format!("depth_m must be positive, got {depth}"),
            });
        }
        out.push(TrackObservation {
            frame: index(f[0], n, "frame_id")? as usize,
            feature: index(f[1], n, "feature_id")?,
            pixel: Vector2::new(number(f[2], n, "u_px")?, number(f[3], n, "v_px")?),
            depth,
        });
    }
    Ok((k, out))
}

pub fn write_track_file(k: &Intrinsics, observations: &[TrackObservation]) -> String {
    let mut out = format!("{},{},{},{}\n{TRACK_COLUMNS}\n", k.fx, k.fy, k.cx, k.cy);
    for o in observations {
        let _ = writeln!(out, "{},{},{},{},{}", o.frame, o.feature, o.pixel.x, o.pixel.y, o.depth);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let k = Intrinsics {
            fx: 700.0,
            fy: 700.0,
            cx: 320.5,
            cy: 240.5,
        };
        let obs = vec![
            TrackObservation {
                frame: 2,
                feature: 9,
                pixel: Vector2::new(12.000000001, 400.25),
                depth: 17.123456789012,
            },
            TrackObservation {
                frame: 0,
                feature: 1,
                pixel: Vector2::new(-3.5, 0.0),
                depth: 0.5,
            },
        ];
        let text = write_track_file(&k, &obs);
        assert_eq!(read_track_file(&text).unwrap(), (k, obs));
        assert!(read_track_file("700,700,320,240\n0,1,2,3,0\n").is_err());
        assert!(read_track_file("700,700,320,240\n0,1,2,3\n").is_err());
        assert!(read_track_file("700,700,320,240\n0,1.5,2,3,4\n").is_err());
    }
}
