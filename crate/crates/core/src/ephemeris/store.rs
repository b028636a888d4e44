use std::collections::HashMap;

use super::{
    glonass_sat_state, gps_sat_state, EphemerisError, GlonassEphemeris, KeplerEphemeris,
    NavRecord, SatId, SatState,
};
use crate::frames::GnssTime;

#[derive(Clone, Debug)]
enum Entry {
    Gps(KeplerEphemeris),
    Glonass(GlonassEphemeris),
}

impl Entry {
    fn reference(&self) -> GnssTime {
        match self {
            Entry::Gps(e) => e.toe,
            Entry::Glonass(e) => e.tb,
        }
    }
}

/// Ephemerides keyed by satellite.
///
/// Lookups take `&self` and insertion `&mut self`; wrap in a `RwLock` to
/// share one store between threads.
#[derive(Clone, Debug, Default)]
pub struct EphemerisStore {
    // entries per satellite, in insertion order
    entries: HashMap<(super::Constellation, u8), Vec<Entry>>,
}

impl EphemerisStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = NavRecord>) -> Self {
        let mut store = Self::new();
        store.extend(records);
        store
    }

    pub fn insert(&mut self, record: NavRecord) {
        let sat = record.sat();
        let entry = match record {
            NavRecord::Gps(_, e) => Entry::Gps(e),
            NavRecord::Glonass(_, e) => Entry::Glonass(e),
        };
        self.entries
            .entry((sat.constellation, sat.prn))
            .or_default()
            .push(entry);
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = NavRecord>) {
        for r in records {
            self.insert(r);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, sat: &SatId, t: &GnssTime) -> Option<&Entry> {
        let list = self.entries.get(&(sat.constellation, sat.prn))?;
        // minimal |t - ref|; on ties the later-inserted record wins
        let mut best: Option<(&Entry, f64)> = None;
        for e in list {
            let age = (*t - e.reference()).abs();
            if best.is_none_or(|(_, b)| age <= b) {
                best = Some((e, age));
            }
        }
        best.map(|(e, _)| e)
    }

    pub fn gps(&self, sat: &SatId, t: &GnssTime) -> Option<&KeplerEphemeris> {
        match self.select(sat, t)? {
            Entry::Gps(e) => Some(e),
            Entry::Glonass(_) => None,
        }
    }

    pub fn glonass(&self, sat: &SatId, t: &GnssTime) -> Option<&GlonassEphemeris> {
        match self.select(sat, t)? {
            Entry::Glonass(e) => Some(e),
            Entry::Gps(_) => None,
        }
    }

    /// Satellite state from the record closest to `t`.
    pub fn sat_state(&self, sat: &SatId, t: &GnssTime) -> Result<SatState, EphemerisError> {
        match self.select(sat, t) {
            Some(Entry::Gps(e)) => gps_sat_state(e, t),
            Some(Entry::Glonass(e)) => glonass_sat_state(e, t),
            None => Err(EphemerisError::NoEphemeris(*sat)),
        }
    }
}
