//! Daily broadcast navigation file download with an on-disk cache.
//!
//! Cache layout is `{cache_dir}/{yyyy}/{ddd}/{filename}`. Downloads go to a
//! temporary file in the target directory and are renamed into place only
//! after the transfer completes.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use super::decompress_unix_z;

/// Overrides the cache directory.
pub const ENV_CACHE_DIR: &str = "RAWGNSS_CACHE_DIR";
/// Overrides the archive base URL.
pub const ENV_BASE_URL: &str = "RAWGNSS_NAV_BASE_URL";

const DEFAULT_BASE_URL: &str = "https://cddis.nasa.gov/archive/gnss/data/daily";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("navigation file not available at {url}")]
    NotAvailable { url: String },
    #[error("network error fetching {url}: {reason}")]
    NetworkError { url: String, reason: String },
    #[error("cache i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("not found")]
    NotFound,
    #[error("{0}")]
    Failed(String),
}

/// Byte source for a URL. Implementations stream into `sink`.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, sink: &mut dyn Write) -> Result<(), TransportError>;
}

/// Blocking HTTP(S) transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str, sink: &mut dyn Write) -> Result<(), TransportError> {
        match self.agent.get(url).call() {
            Ok(mut resp) => {
                let mut reader = resp.body_mut().as_reader();
                std::io::copy(&mut reader, sink)
                    .map(|_| ())
                    .map_err(|e| TransportError::Failed(e.to_string()))
            }
            Err(ureq::Error::StatusCode(404)) => Err(TransportError::NotFound),
            Err(e) => Err(TransportError::Failed(e.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NavKind {
    Gps,
    Glonass,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FetchConfig {
    pub cache_dir: PathBuf,
    pub base_url: String,
}

impl FetchConfig {
    pub fn new(cache_dir: impl Into<PathBuf>, base_url: impl Into<String>) -> Self {
        Self {
            cache_dir: cache_dir.into(),
            base_url: base_url.into(),
        }
    }

    /// Environment overrides, falling back to a temp-dir cache and the CDDIS archive.
    pub fn from_env() -> Self {
        let cache_dir = std::env::var_os(ENV_CACHE_DIR)
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("rawgnss-cache"));
        let base_url = std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        Self { cache_dir, base_url }
    }
}

/// IGS daily broadcast file name, e.g. `brdc0060.19n.gz`.
pub fn nav_file_name(day: NaiveDate, kind: NavKind) -> String {
    let letter = match kind {
        NavKind::Gps => 'n',
        NavKind::Glonass => 'g',
    };
    format!("brdc{:03}0.{:02}{}.gz", day.ordinal(), day.year() % 100, letter)
}

pub fn cache_path(cache_dir: &Path, day: NaiveDate, kind: NavKind) -> PathBuf {
    cache_dir
        .join(format!("{:04}", day.year()))
        .join(format!("{:03}", day.ordinal()))
        .join(nav_file_name(day, kind))
}

/// `{base}/{yyyy}/{ddd}/{yy}{n|g}/{filename}`
pub fn remote_url(base_url: &str, day: NaiveDate, kind: NavKind) -> String {
    let letter = match kind {
        NavKind::Gps => 'n',
        NavKind::Glonass => 'g',
    };
    format!(
        "{}/{:04}/{:03}/{:02}{}/{}",
        base_url.trim_end_matches('/'),
        day.year(),
        day.ordinal(),
        day.year() % 100,
        letter,
        nav_file_name(day, kind)
    )
}

fn in_flight_lock(path: &Path) -> Arc<Mutex<()>> {
    static LOCKS: OnceLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> = OnceLock::new();
    let mut map = LOCKS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    map.entry(path.to_path_buf()).or_default().clone()
}

/// GPS navigation file for `day`.
pub fn fetch_ephemeris(
    day: NaiveDate,
    cfg: &FetchConfig,
    transport: &dyn Transport,
) -> Result<PathBuf, FetchError> {
    fetch_nav_file(day, NavKind::Gps, cfg, transport)
}

/// Returns the cached file for `day`, downloading it first if needed.
/// Concurrent calls for the same file share one download.
pub fn fetch_nav_file(
    day: NaiveDate,
    kind: NavKind,
    cfg: &FetchConfig,
    transport: &dyn Transport,
) -> Result<PathBuf, FetchError> {
    let path = cache_path(&cfg.cache_dir, day, kind);
    if path.is_file() {
        return Ok(path);
    }
    let lock = in_flight_lock(&path);
    let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
    if path.is_file() {
        return Ok(path);
    }
    let dir = path.parent().expect("cache path has a parent");
    fs::create_dir_all(dir)?;
    let url = remote_url(&cfg.base_url, day, kind);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    match transport.get(&url, tmp.as_file_mut()) {
        Ok(()) => {}
        Err(TransportError::NotFound) => return Err(FetchError::NotAvailable { url }),
        Err(TransportError::Failed(reason)) => return Err(FetchError::NetworkError { url, reason }),
    }
    tmp.as_file().sync_all()?;
    tmp.persist(&path).map_err(|e| e.error)?;
    Ok(path)
}

/// Reads a navigation file, transparently inflating gzip or unix-compress content.
pub fn read_nav_file(path: &Path) -> std::io::Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else if raw.starts_with(&[0x1f, 0x9d]) {
        decompress_unix_z(&raw).ok_or_else(|| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, "corrupt .Z stream")
        })
    } else {
        Ok(raw)
    }
}
