//! Raw observation CSV.
//!
//! One observation per line:
//! `week,tow,constel,svid,freq_chan,pseudorange_m,doppler_hz,carrier_cycles,cn0_dbhz,pr_std_m`.
//! `constel` is `G` or `R`; optional observables are empty fields. The
//! header line is mandatory.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MeasurementError;
use crate::ephemeris::{Constellation, SatId};
use crate::frames::GnssTime;

pub const RAW_HEADER: &str =
    "week,tow,constel,svid,freq_chan,pseudorange_m,doppler_hz,carrier_cycles,cn0_dbhz,pr_std_m";

/// One satellite observation at one receiver epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawGnssRecord {
    pub time: GnssTime,
    pub sat: SatId,
    /// [m]
    pub pseudorange: Option<f64>,
    /// [Hz], positive when the satellite approaches.
    pub doppler: Option<f64>,
    /// [cycles]; carried through, never solved.
    pub carrier_phase: Option<f64>,
    /// [dB-Hz]
    pub cn0: Option<f64>,
    /// Receiver-reported pseudorange sigma [m].
    pub pr_std: Option<f64>,
}

/// Records sharing one receiver epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    pub time: GnssTime,
    pub records: Vec<RawGnssRecord>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawLog {
    pub epochs: Vec<Epoch>,
    /// Lines rejected as malformed.
    pub malformed: usize,
    /// Lines rejected because their epoch precedes an earlier one.
    pub out_of_order: usize,
    /// One entry per rejected line.
    pub rejected: Vec<MeasurementError>,
}

fn optional(field: &str, name: &str) -> Result<Option<f64>, String> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    let v: f64 = f.parse().map_err(|_| format!("{name}: not a number: {f:?}"))?;
    if !v.is_finite() {
        return Err(format!("{name}: non-finite value"));
    }
    Ok(Some(v))
}

fn parse_line(line: &str) -> Result<RawGnssRecord, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 10 {
        return Err(format!("expected 10 fields, found {}", f.len()));
    }
    let week: i64 = f[0].trim().parse().map_err(|_| "week: not an integer")?;
    let tow: f64 = f[1].trim().parse().map_err(|_| "tow: not a number")?;
    if !(0.0..604800.0).contains(&tow) || !(0..=100_000).contains(&week) {
        return Err(format!("time out of range: week {week}, tow {tow}"));
    }
    let time = GnssTime::new(week, tow).map_err(|e| e.to_string())?;

    let code = f[2].trim();
    let constellation = match code {
        "G" => Constellation::Gps,
        "R" => Constellation::Glonass,
        _ => return Err(format!("unknown constellation {code:?}")),
    };
    let svid: u8 = f[3].trim().parse().map_err(|_| "svid: not an integer")?;
    let chan = f[4].trim();
    let sat = match constellation {
        Constellation::Gps => {
            if !(chan.is_empty() || chan == "0") {
                return Err("GPS frequency channel must be 0 or empty".into());
            }
            SatId::gps(svid)
        }
        Constellation::Glonass => {
            let ch: i8 = chan.parse().map_err(|_| "freq_chan: not an integer")?;
            SatId::glonass(svid, ch)
        }
    }
    .map_err(|e| e.to_string())?;

    let pseudorange = optional(f[5], "pseudorange")?;
    if let Some(pr) = pseudorange {
        if !(1.8e7..=3.0e7).contains(&pr) {
            return Err(format!("pseudorange {pr} m out of range"));
        }
    }
    let cn0 = optional(f[8], "cn0")?;
    if let Some(c) = cn0 {
        if !(0.0..=64.0).contains(&c) {
            return Err(format!("cn0 {c} dB-Hz out of range"));
        }
    }
    let pr_std = optional(f[9], "pr_std")?;
    if pr_std.is_some_and(|s| s <= 0.0) {
        return Err("pr_std must be positive".into());
    }
    Ok(RawGnssRecord {
        time,
        sat,
        pseudorange,
        doppler: optional(f[6], "doppler")?,
        carrier_phase: optional(f[7], "carrier_phase")?,
        cn0,
        pr_std,
    })
}

/// Parses a raw observation file, grouping records by epoch.
///
/// Malformed lines and lines whose epoch precedes the current one are
/// skipped, counted, and reported with their line numbers. An empty input
/// yields an empty log; any other input must start with the header.
pub fn parse_raw_records(bytes: &[u8]) -> Result<RawLog, MeasurementError> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut log = RawLog::default();
    match lines.next() {
        None => return Ok(log),
        Some((_, l)) if l.trim().starts_with("week,") => {}
        Some(_) => return Err(MeasurementError::HeaderMissing),
    }
    for (i, line) in lines {
        let line_no = i + 1;
        let rec = match parse_line(line.trim_end_matches('\r')) {
            Ok(r) => r,
            Err(reason) => {
                log.malformed += 1;
                log.rejected.push(MeasurementError::MalformedRecord { line: line_no, reason });
                continue;
            }
        };
        match log.epochs.last_mut() {
            Some(last) if last.time == rec.time => last.records.push(rec),
            Some(last) if rec.time - last.time < 0.0 => {
                log.out_of_order += 1;
                log.rejected.push(MeasurementError::OutOfOrder {
                    line: line_no,
                    epoch: rec.time,
                    previous: last.time,
                });
            }
            _ => log.epochs.push(Epoch {
                time: rec.time,
                records: vec![rec],
            }),
        }
    }
    Ok(log)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes records in the raw CSV format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_raw_records<'a>(records: impl IntoIterator<Item = &'a RawGnssRecord>) -> String {
    let mut out = String::from(RAW_HEADER);
    out.push('\n');
    for r in records {
        let chan = if r.sat.is_glonass() {
            r.sat.freq_channel.to_string()
        } else {
            "0".to_string()
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.time.week(),
            r.time.tow(),
            r.sat.constellation.code(),
            r.sat.prn,
            chan,
            opt(r.pseudorange),
            opt(r.doppler),
            opt(r.carrier_phase),
            opt(r.cn0),
            opt(r.pr_std)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn body(lines: &[&str]) -> String {
        let mut s = format!("{RAW_HEADER}\n");
        for l in lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    #[test]
    fn empty_file() {
        let log = parse_raw_records(b"").unwrap();
        assert!(log.epochs.is_empty());
        assert_eq!(log.malformed, 0);
        assert!(parse_raw_records(body(&[]).as_bytes()).unwrap().epochs.is_empty());
    }

    #[test]
    fn header_is_required() {
        assert!(matches!(
            parse_raw_records(b"2035,100,G,5,0,2.1e7,,,40,\n"),
            Err(MeasurementError::HeaderMissing)
        ));
    }

    #[test]
    fn same_epoch_groups() {
        let text = body(&[
            "2035,100.5,G,5,0,21000000.5,-1200.25,,42,",
            "2035,100.5,R,3,-4,22000000,800,123.5,38,3",
        ]);
        let log = parse_raw_records(text.as_bytes()).unwrap();
        assert_eq!(log.epochs.len(), 1);
        let e = &log.epochs[0];
        assert_eq!(e.records.len(), 2);
        assert_eq!(e.records[0].carrier_phase, None);
        assert_eq!(e.records[0].pr_std, None);
        assert_eq!(e.records[1].sat, SatId::glonass(3, -4).unwrap());
        assert_eq!(e.records[1].carrier_phase, Some(123.5));
        assert_eq!(e.records[1].pr_std, Some(3.0));
    }

    #[test]
    fn zero_pseudorange_is_malformed() {
        let text = body(&["2035,100,G,5,0,0,,,40,", "2035,100,G,6,0,21000000,,,40,"]);
        let log = parse_raw_records(text.as_bytes()).unwrap();
        assert_eq!(log.malformed, 1);
        assert!(matches!(log.rejected[0], MeasurementError::MalformedRecord { line: 2, .. }));
        assert_eq!(log.epochs[0].records.len(), 1);
    }

    #[test]
    fn absent_pseudorange_is_not_zero() {
        let log = parse_raw_records(body(&["2035,100,G,5,0,,-5,,40,"]).as_bytes()).unwrap();
        assert_eq!(log.epochs[0].records[0].pseudorange, None);
    }

    #[test]
    fn non_monotonic_epochs_rejected() {
        let text = body(&[
            "2035,100,G,5,0,21000000,,,40,",
            "2035,99.9,G,6,0,21000000,,,40,",
            "2035,100.1,G,7,0,21000000,,,40,",
        ]);
        let log = parse_raw_records(text.as_bytes()).unwrap();
        assert_eq!(log.out_of_order, 1);
        assert!(matches!(log.rejected[0], MeasurementError::OutOfOrder { line: 3, .. }));
        assert_eq!(log.epochs.len(), 2);
    }

    #[test]
    fn bad_fields() {
        for l in [
            "2035,100,E,5,0,21000000,,,40,",
            "2035,100,G,33,0,21000000,,,40,",
            "2035,100,R,3,9,21000000,,,40,",
            "2035,100,G,5,1,21000000,,,40,",
            "2035,604800,G,5,0,21000000,,,40,",
            "2035,100,G,5,0,21000000,,,70,",
            "2035,100,G,5,0,nan,,,40,",
            "2035,100,G,5,0,21000000,,,40",
            "2035,100,G,5,0,21000000,,,40,-1",
        ] {
            let log = parse_raw_records(body(&[l]).as_bytes()).unwrap();
            assert_eq!(log.malformed, 1, "{l}");
        }
    }

    #[test]
    fn write_parse_roundtrip() {
        let text = body(&[
            "2035,100.1,G,5,0,21000000.123456789,-1200.0000001,,42.5,",
            "2035,100.1,R,3,-7,22000000.9,800.5,123456.75,38,2.5",
        ]);
        let log = parse_raw_records(text.as_bytes()).unwrap();
        let recs: Vec<_> = log.epochs.iter().flat_map(|e| e.records.iter()).collect();
        let again = write_raw_records(recs.iter().copied());
        assert_eq!(parse_raw_records(again.as_bytes()).unwrap(), log);
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(data in proptest::collection::vec(any::<u8>(), 0..400)) {
            let mut input = format!("{RAW_HEADER}\n").into_bytes();
            input.extend(data);
            let _ = parse_raw_records(&input);
        }
    }
}
