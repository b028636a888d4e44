//! RINEX 2.x / 3.x navigation message reader and a RINEX 3 writer.

use std::fmt::Write as _;

use chrono::{NaiveDate, NaiveDateTime};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{
    Constellation, EphemerisError, GlonassEphemeris, KeplerEphemeris, SatId,
};
use crate::frames::{GnssTime, DEFAULT_LEAP_SECONDS};

/// Klobuchar broadcast coefficients (alpha in s, s/semicircle, ...; beta in s, ...).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonoParams {
    pub alpha: [f64; 4],
    pub beta: [f64; 4],
}

impl IonoParams {
    pub fn check(&self) -> Result<(), String> {
        if self.alpha.iter().chain(self.beta.iter()).any(|v| !v.is_finite()) {
            return Err("non-finite ionosphere coefficient".into());
        }
        // alpha0 is seconds of vertical delay, beta0 seconds of period
        if self.alpha[0].abs() > 1e-6 || self.beta[0].abs() > 1e6 {
            return Err("ionosphere coefficients out of range".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NavRecord {
    Gps(SatId, KeplerEphemeris),
    Glonass(SatId, GlonassEphemeris),
}

impl NavRecord {
    pub fn sat(&self) -> SatId {
        match self {
            NavRecord::Gps(s, _) | NavRecord::Glonass(s, _) => *s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

/// Result of parsing one navigation file.
#[derive(Clone, Debug, Default)]
pub struct NavData {
    pub version: f64,
    pub records: Vec<NavRecord>,
    pub iono: Option<IonoParams>,
    pub leap_seconds: Option<f64>,
    /// Malformed or implausible records that were dropped.
    pub skipped: usize,
    /// Records of constellations this crate does not model (Galileo, BeiDou, ...).
    pub unsupported: usize,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Layout {
    V2(Constellation),
    V3,
}

impl Layout {
    fn indent(&self) -> usize {
        match self {
            Layout::V2(_) => 3,
            Layout::V3 => 4,
        }
    }
}

fn header_label(line: &str) -> &str {
    line.get(60..).map(str::trim).unwrap_or("")
}

/// Parses a fixed-width RINEX float (`D` or `E` exponent). Blank fields are 0.
///
/// When the line ends inside the field, the fragment must still carry an
/// exponent, which catches records cut mid-number.
fn parse_field(line: &str, start: usize, width: usize) -> Result<f64, String> {
    let end = start + width;
    let Some(raw) = line.get(start.min(line.len())..end.min(line.len())) else {
        return Err(format!("non-ASCII data in columns {}-{}", start + 1, end));
    };
    let text = raw.trim();
    if text.is_empty() {
        return Ok(0.0);
    }
    let norm = text.replace(['D', 'd'], "E");
    let truncated = line.len() < end;
    if truncated {
        let has_exp = norm
            .rsplit_once(['E', 'e'])
            .is_some_and(|(_, exp)| exp.trim_start_matches(['+', '-']).len() >= 2);
        if !has_exp {
            return Err(format!("truncated field in columns {}-{}", start + 1, end));
        }
    }
    let v: f64 = norm
        .parse()
        .map_err(|_| format!("bad number '{}' in columns {}-{}", text, start + 1, end))?;
    if !v.is_finite() {
        return Err(format!("non-finite number in columns {}-{}", start + 1, end));
    }
    Ok(v)
}

fn parse_int(line: &str, start: usize, end: usize, what: &str) -> Result<i64, String> {
    line.get(start..end.min(line.len()))
        .map(str::trim)
        .and_then(|s| s.parse::<i64>().ok())
        .ok_or_else(|| format!("bad {what}"))
}

fn parse_seconds(line: &str, start: usize, end: usize) -> Result<f64, String> {
    line.get(start..end.min(line.len()))
        .map(str::trim)
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|s| (0.0..61.0).contains(s))
        .ok_or_else(|| "bad epoch seconds".to_string())
}

fn make_datetime(y: i64, mo: i64, d: i64, h: i64, mi: i64, s: f64) -> Result<NaiveDateTime, String> {
    let date = NaiveDate::from_ymd_opt(y as i32, mo as u32, d as u32).ok_or("bad epoch date")?;
    let whole = s.floor();
    let nanos = ((s - whole) * 1e9).round() as u32;
    date.and_hms_nano_opt(h as u32, mi as u32, whole as u32, nanos)
        .ok_or_else(|| "bad epoch time".to_string())
}

struct Header {
    version: f64,
    layout: Layout,
    glonass_extra_line: bool,
    iono: Option<IonoParams>,
    leap_seconds: Option<f64>,
    body_start: usize,
}

fn parse_header(lines: &[&str], diags: &mut Vec<Diagnostic>) -> Result<Header, EphemerisError> {
    let first = lines.first().ok_or(EphemerisError::HeaderMissing)?;
    if header_label(first) != "RINEX VERSION / TYPE" {
        return Err(EphemerisError::HeaderMissing);
    }
    let version: f64 = first
        .get(0..9)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| EphemerisError::UnsupportedVersion(first.trim().to_string()))?;
    let file_type = first.get(20..21).unwrap_or(" ");
    let system = first.get(40..41).unwrap_or(" ");
    let layout = match (version.floor() as i64, file_type) {
        (2, "N") => Layout::V2(Constellation::Gps),
        (2, "G") => Layout::V2(Constellation::Glonass),
        (3, "N") => Layout::V3,
        _ => {
            return Err(EphemerisError::UnsupportedVersion(format!(
                "version {version}, type '{file_type}', system '{system}'"
            )))
        }
    };

    let mut alpha = None;
    let mut beta = None;
    let mut leap_seconds = None;
    for (idx, line) in lines.iter().enumerate() {
        let label = header_label(line);
        let coeffs = |offset: usize| -> Option<[f64; 4]> {
            let mut out = [0.0; 4];
            for (k, v) in out.iter_mut().enumerate() {
                *v = parse_field(line, offset + 12 * k, 12).ok()?;
            }
            Some(out)
        };
        match label {
            "ION ALPHA" => alpha = coeffs(2),
            "ION BETA" => beta = coeffs(2),
            "IONOSPHERIC CORR" => match line.get(0..4) {
                Some("GPSA") => alpha = coeffs(5),
                Some("GPSB") => beta = coeffs(5),
                _ => {}
            },
            "LEAP SECONDS" => {
                leap_seconds = line.get(0..6).and_then(|s| s.trim().parse::<f64>().ok());
            }
            "END OF HEADER" => {
                let iono = match (alpha, beta) {
                    (Some(alpha), Some(beta)) => {
                        let p = IonoParams { alpha, beta };
                        match p.check() {
                            Ok(()) => Some(p),
                            Err(e) => {
                                diags.push(Diagnostic { line: idx + 1, message: e });
                                None
                            }
                        }
                    }
                    _ => None,
                };
                return Ok(Header {
                    version,
                    layout,
                    glonass_extra_line: version >= 3.05,
                    iono,
                    leap_seconds,
                    body_start: idx + 1,
                });
            }
            _ => {}
        }
    }
    Err(EphemerisError::HeaderMissing)
}

fn is_record_start(line: &str, layout: Layout) -> bool {
    let bytes = line.as_bytes();
    match layout {
        Layout::V3 => bytes.first().is_some_and(|b| !b.is_ascii_whitespace()),
        Layout::V2(_) => bytes.iter().take(2).any(|b| !b.is_ascii_whitespace()),
    }
}

fn lines_for(system: char, header: &Header) -> usize {
    match system {
        'R' => {
            if header.glonass_extra_line {
                5
            } else {
                4
            }
        }
        'S' => 4,
        _ => 8,
    }
}

/// Epoch and first-line fields of one record.
struct RecordHead {
    prn: i64,
    epoch: NaiveDateTime,
    fields: [f64; 3],
}

fn parse_head(line: &str, layout: Layout) -> Result<RecordHead, String> {
    match layout {
        Layout::V2(_) => {
            let prn = parse_int(line, 0, 2, "satellite number")?;
            let yy = parse_int(line, 2, 5, "year")?;
            let year = if yy < 80 { 2000 + yy } else { 1900 + yy };
            let epoch = make_datetime(
                year,
                parse_int(line, 5, 8, "month")?,
                parse_int(line, 8, 11, "day")?,
                parse_int(line, 11, 14, "hour")?,
                parse_int(line, 14, 17, "minute")?,
                parse_seconds(line, 17, 22)?,
            )?;
            let fields = [
                parse_field(line, 22, 19)?,
                parse_field(line, 41, 19)?,
                parse_field(line, 60, 19)?,
            ];
            Ok(RecordHead { prn, epoch, fields })
        }
        Layout::V3 => {
            let prn = parse_int(line, 1, 3, "satellite number")?;
            let epoch = make_datetime(
                parse_int(line, 3, 8, "year")?,
                parse_int(line, 8, 11, "month")?,
                parse_int(line, 11, 14, "day")?,
                parse_int(line, 14, 17, "hour")?,
                parse_int(line, 17, 20, "minute")?,
                parse_int(line, 20, 23, "second")? as f64,
            )?;
            let fields = [
                parse_field(line, 23, 19)?,
                parse_field(line, 42, 19)?,
                parse_field(line, 61, 19)?,
            ];
            Ok(RecordHead { prn, epoch, fields })
        }
    }
}

/// Reads the four 19-column fields of a continuation line.
fn orbit_line(line: &str, layout: Layout, required: usize) -> Result<[f64; 4], String> {
    let indent = layout.indent();
    if line.get(0..indent).is_none_or(|s| !s.trim().is_empty()) {
        return Err("expected continuation line".into());
    }
    let mut out = [0.0; 4];
    for (k, v) in out.iter_mut().enumerate() {
        let start = indent + 19 * k;
        let present = line.get(start..).is_some_and(|s| !s.trim().is_empty());
        if k < required && !present {
            return Err(format!("missing field {} of continuation line", k + 1));
        }
        *v = parse_field(line, start, 19)?;
    }
    Ok(out)
}

fn build_gps(head: &RecordHead, lines: &[&str], layout: Layout) -> Result<NavRecord, String> {
    let sat = SatId::gps(u8::try_from(head.prn).map_err(|_| "bad PRN")?).map_err(|e| e.to_string())?;
    let o1 = orbit_line(lines[0], layout, 4)?;
    let o2 = orbit_line(lines[1], layout, 4)?;
    let o3 = orbit_line(lines[2], layout, 4)?;
    let o4 = orbit_line(lines[3], layout, 4)?;
    let o5 = orbit_line(lines[4], layout, 3)?;
    let o6 = orbit_line(lines[5], layout, 4)?;
    let o7 = orbit_line(lines[6], layout, 1)?;
    let week = o5[2];
    if !(0.0..1e5).contains(&week) || week.fract() != 0.0 {
        return Err(format!("bad GPS week {week}"));
    }
    if !(0.0..604800.0).contains(&o3[0]) {
        return Err(format!("bad toe {}", o3[0]));
    }
    // toc is stamped in GPS time, no leap seconds
    let toc = GnssTime::from_utc(head.epoch, 0.0).map_err(|e| e.to_string())?;
    let toe = GnssTime::new(week as i64, o3[0]).map_err(|e| e.to_string())?;
    let eph = KeplerEphemeris {
        toe,
        toc,
        af0: head.fields[0],
        af1: head.fields[1],
        af2: head.fields[2],
        iode: o1[0],
        crs: o1[1],
        delta_n: o1[2],
        m0: o1[3],
        cuc: o2[0],
        e: o2[1],
        cus: o2[2],
        sqrt_a: o2[3],
        cic: o3[1],
        omega0: o3[2],
        cis: o3[3],
        i0: o4[0],
        crc: o4[1],
        omega: o4[2],
        omega_dot: o4[3],
        idot: o5[0],
        codes_l2: o5[1],
        l2p_flag: o5[3],
        ura: o6[0],
        health: o6[1],
        tgd: o6[2],
        iodc: o6[3],
        transmit_tow: o7[0],
        fit_interval: o7[1],
    };
    eph.check()?;
    Ok(NavRecord::Gps(sat, eph))
}

fn build_glonass(
    head: &RecordHead,
    lines: &[&str],
    layout: Layout,
    leap_seconds: f64,
) -> Result<NavRecord, String> {
    let o1 = orbit_line(lines[0], layout, 4)?;
    let o2 = orbit_line(lines[1], layout, 4)?;
    let o3 = orbit_line(lines[2], layout, 4)?;
    let channel = o2[3];
    if channel.fract() != 0.0 || !(-7.0..=6.0).contains(&channel) {
        return Err(format!("bad frequency channel {channel}"));
    }
    let sat = SatId::glonass(u8::try_from(head.prn).map_err(|_| "bad slot")?, channel as i8)
        .map_err(|e| e.to_string())?;
    // GLONASS records are stamped in UTC
    let tb = GnssTime::from_utc(head.epoch, leap_seconds).map_err(|e| e.to_string())?;
    let eph = GlonassEphemeris {
        tb,
        position: Vector3::new(o1[0], o2[0], o3[0]) * 1e3,
        velocity: Vector3::new(o1[1], o2[1], o3[1]) * 1e3,
        acceleration: Vector3::new(o1[2], o2[2], o3[2]) * 1e3,
        tau_n: -head.fields[0],
        gamma_n: head.fields[1],
        frame_time: head.fields[2],
        freq_channel: channel as i8,
        health: o1[3],
        age: o3[3],
    };
    eph.check()?;
    Ok(NavRecord::Glonass(sat, eph))
}

/// Parses navigation content with the default GPS-UTC offset for GLONASS epochs.
pub fn parse_rinex_nav(bytes: &[u8]) -> Result<NavData, EphemerisError> {
    parse_rinex_nav_with_leap(bytes, DEFAULT_LEAP_SECONDS)
}

/// Parses navigation content. Malformed records are skipped and reported in
/// [`NavData::diagnostics`]; only an unusable header is an error.
///
/// GLONASS epochs (UTC) are moved to GPS time with the header's
/// `LEAP SECONDS` value when present, else `leap_seconds`.
pub fn parse_rinex_nav_with_leap(bytes: &[u8], leap_seconds: f64) -> Result<NavData, EphemerisError> {
    let text = String::from_utf8_lossy(bytes);
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let mut diagnostics = Vec::new();
    let header = parse_header(&lines, &mut diagnostics)?;
    let leap = header.leap_seconds.unwrap_or(leap_seconds);
    let layout = header.layout;

    let mut data = NavData {
        version: header.version,
        iono: header.iono,
        leap_seconds: header.leap_seconds,
        diagnostics,
        ..Default::default()
    };

    let mut i = header.body_start;
    while i < lines.len() {
        let line = lines[i];
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        let line_no = i + 1;
        if !is_record_start(line, layout) {
            data.diagnostics.push(Diagnostic {
                line: line_no,
                message: "continuation line without a record".into(),
            });
            data.skipped += 1;
            i += 1;
            continue;
        }
        let system = match layout {
            Layout::V2(c) => c.code(),
            Layout::V3 => line.chars().next().unwrap_or(' '),
        };
        let n_lines = lines_for(system, &header);
        // the record ends early if a new record starts inside it
        let mut end = i + 1;
        while end < lines.len() && end < i + n_lines && !is_record_start(lines[end], layout) {
            end += 1;
        }
        let body = &lines[i + 1..end];

        let result = if Constellation::from_code(system).is_none() {
            data.unsupported += 1;
            i = end;
            continue;
        } else if body.len() + 1 < n_lines {
            Err(format!(
                "record truncated: expected {} lines, found {}",
                n_lines,
                body.len() + 1
            ))
        } else {
            parse_head(line, layout).and_then(|head| match system {
                'G' => build_gps(&head, body, layout),
                _ => build_glonass(&head, body, layout, leap),
            })
        };
        match result {
            Ok(rec) => data.records.push(rec),
            Err(message) => {
                data.diagnostics.push(Diagnostic { line: line_no, message });
                data.skipped += 1;
            }
        }
        i = end;
    }
    Ok(data)
}

/// Formats a value as a RINEX `D19.12` field.
pub fn format_rinex_float(v: f64) -> String {
    if v == 0.0 {
        return " 0.000000000000D+00".to_string();
    }
    let s = format!("{:.12E}", v.abs());
    let (mant, exp) = s.split_once('E').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if v < 0.0 { '-' } else { ' ' };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mant}D{esign}{:02}", exp.abs())
}

fn push_fields(out: &mut String, indent: usize, values: &[f64]) {
    out.push_str(&" ".repeat(indent));
    for v in values {
        out.push_str(&format_rinex_float(*v));
    }
    out.push('\n');
}

fn header_line(out: &mut String, content: &str, label: &str) {
    let _ = writeln!(out, "{content:<60}{label:<20}");
}

/// Writes a RINEX 3.04 mixed navigation file holding `records`.
///
/// GLONASS reference epochs are written in UTC using `leap_seconds`.
pub fn write_rinex_nav(records: &[NavRecord], iono: Option<&IonoParams>, leap_seconds: f64) -> String {
    let mut out = String::new();
    header_line(
        &mut out,
        &format!("{:>9.2}{:11}{:<20}{:<20}", 3.04, "", "N: GNSS NAV DATA", "M: MIXED"),
        "RINEX VERSION / TYPE",
    );
    header_line(&mut out, &format!("{:<20}{:<20}{:<20}", "rawgnss", "", ""), "PGM / RUN BY / DATE");
    if let Some(p) = iono {
        let line = |tag: &str, v: &[f64; 4]| {
            let mut s = format!("{tag:<5}");
            for c in v {
                s.push_str(&format!("{:>12}", format_d12(*c)));
            }
            s
        };
        header_line(&mut out, &line("GPSA", &p.alpha), "IONOSPHERIC CORR");
        header_line(&mut out, &line("GPSB", &p.beta), "IONOSPHERIC CORR");
    }
    header_line(&mut out, &format!("{:>6}", leap_seconds as i64), "LEAP SECONDS");
    header_line(&mut out, "", "END OF HEADER");

    for rec in records {
        match rec {
            NavRecord::Gps(sat, e) => {
                let toc = e.toc.to_gps_calendar();
                let _ = write!(out, "G{:02} {}", sat.prn, toc.format("%Y %m %d %H %M %S"));
                for v in [e.af0, e.af1, e.af2] {
                    out.push_str(&format_rinex_float(v));
                }
                out.push('\n');
                push_fields(&mut out, 4, &[e.iode, e.crs, e.delta_n, e.m0]);
                push_fields(&mut out, 4, &[e.cuc, e.e, e.cus, e.sqrt_a]);
                push_fields(&mut out, 4, &[e.toe.tow(), e.cic, e.omega0, e.cis]);
                push_fields(&mut out, 4, &[e.i0, e.crc, e.omega, e.omega_dot]);
                push_fields(&mut out, 4, &[e.idot, e.codes_l2, e.toe.week() as f64, e.l2p_flag]);
                push_fields(&mut out, 4, &[e.ura, e.health, e.tgd, e.iodc]);
                push_fields(&mut out, 4, &[e.transmit_tow, e.fit_interval]);
            }
            NavRecord::Glonass(sat, e) => {
                let utc = e.tb.add_seconds(-leap_seconds).to_gps_calendar();
                let _ = write!(out, "R{:02} {}", sat.prn, utc.format("%Y %m %d %H %M %S"));
                for v in [-e.tau_n, e.gamma_n, e.frame_time] {
                    out.push_str(&format_rinex_float(v));
                }
                out.push('\n');
                let p = e.position / 1e3;
                let v = e.velocity / 1e3;
                let a = e.acceleration / 1e3;
                push_fields(&mut out, 4, &[p.x, v.x, a.x, e.health]);
                push_fields(&mut out, 4, &[p.y, v.y, a.y, e.freq_channel as f64]);
                push_fields(&mut out, 4, &[p.z, v.z, a.z, e.age]);
            }
        }
    }
    out
}

/// `D12.4` field as used by the ionosphere header lines.
fn format_d12(v: f64) -> String {
    if v == 0.0 {
        return "0.0000D+00".to_string();
    }
    let s = format!("{:.4E}", v.abs());
    let (mant, exp) = s.split_once('E').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if v < 0.0 { "-" } else { "" };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mant}D{esign}{:02}", exp.abs())
}
