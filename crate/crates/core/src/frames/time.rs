use std::fmt;
use std::ops::Sub;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::FrameError;

pub const SECONDS_PER_WEEK: f64 = 604800.0;

/// GPS-UTC offset applied to UTC-stamped records (GLONASS ephemerides).
pub const DEFAULT_LEAP_SECONDS: f64 = 18.0;

fn gps_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(1980, 1, 6)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid GPS epoch")
}

/// A GPS-timescale instant as week number and seconds of week.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct GnssTime {
    week: u32,
    tow: f64,
}

impl GnssTime {
    /// Builds a time, normalizing `tow` into `[0, 604800)` by carrying into the week.
    pub fn new(week: i64, tow: f64) -> Result<Self, FrameError> {
        if !tow.is_finite() {
            return Err(FrameError::InvalidTime { week, tow });
        }
        let carry = (tow / SECONDS_PER_WEEK).floor();
        let mut tow_n = tow - carry * SECONDS_PER_WEEK;
        let mut week_n = week + carry as i64;
        // floor() can leave tow_n == 604800 after rounding
        if tow_n >= SECONDS_PER_WEEK {
            tow_n -= SECONDS_PER_WEEK;
            week_n += 1;
        }
        if week_n < 0 || week_n > u32::MAX as i64 {
            return Err(FrameError::InvalidTime { week, tow });
        }
        Ok(Self {
            week: week_n as u32,
            tow: tow_n,
        })
    }

    pub fn week(&self) -> u32 {
        self.week
    }

    pub fn tow(&self) -> f64 {
        self.tow
    }

    /// Shifts by `seconds`; panics only if the result precedes the GPS epoch.
    pub fn add_seconds(&self, seconds: f64) -> Self {
        Self::new(self.week as i64, self.tow + seconds).expect("time before GPS epoch")
    }

    /// Converts a UTC calendar instant into GPS time using a constant leap offset.
    pub fn from_utc(utc: NaiveDateTime, leap_seconds: f64) -> Result<Self, FrameError> {
        let delta = utc - gps_epoch();
        let secs = delta.num_seconds() as f64
            + delta.subsec_nanos() as f64 * 1e-9
            + leap_seconds;
        let week = (secs / SECONDS_PER_WEEK).floor();
        Self::new(week as i64, secs - week * SECONDS_PER_WEEK)
    }

    /// Calendar instant on the GPS timescale (no leap-second removal).
    pub fn to_gps_calendar(&self) -> NaiveDateTime {
        let whole = self.tow.floor();
        let nanos = ((self.tow - whole) * 1e9).round() as i64;
        gps_epoch()
            + Duration::weeks(self.week as i64)
            + Duration::seconds(whole as i64)
            + Duration::nanoseconds(nanos)
    }
}

impl Sub for GnssTime {
    type Output = f64;

    /// Seconds from `rhs` to `self`. Exactly antisymmetric.
    fn sub(self, rhs: GnssTime) -> f64 {
        let dw = (self.week as i64 - rhs.week as i64) as f64 * SECONDS_PER_WEEK;
        dw + (self.tow - rhs.tow)
    }
}

impl fmt::Display for GnssTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.week, self.tow)
    }
}
