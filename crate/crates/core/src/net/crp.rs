//! Gateway-side challenge/response store.

use std::path::Path;
use std::sync::{RwLock, RwLockReadGuard};

use crate::halo::{
    adaptive_threshold, plan_challenge, Challenge, ExpectedResponse, HaloError, MapStore, PageMap,
};

/// Two challenges issued together for one session.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuedPair {
    pub c1: Challenge,
    pub e1: ExpectedResponse,
    pub c2: Challenge,
    pub e2: ExpectedResponse,
}

/// A [`MapStore`] shared between sessions. Issuing takes the write lock, so
/// a location is handed to at most one session.
#[derive(Debug)]
pub struct CrpStore {
    inner: RwLock<MapStore>,
}

impl CrpStore {
    pub fn new(store: MapStore) -> Self {
        Self {
            inner: RwLock::new(store),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, HaloError> {
        MapStore::open(path).map(Self::new)
    }

    pub fn read(&self) -> RwLockReadGuard<'_, MapStore> {
        self.inner.read().expect("crp store lock poisoned")
    }

    pub fn enroll(&self, maps: impl IntoIterator<Item = PageMap>) -> Result<(), HaloError> {
        self.inner
            .write()
            .expect("crp store lock poisoned")
            .put_all(maps)
    }

    pub fn compact(&self) -> Result<(), HaloError> {
        self.inner
            .write()
            .expect("crp store lock poisoned")
            .compact()
    }

    /// Challenges of `n` locations still issuable for `chip_id`.
    pub fn remaining(&self, chip_id: &str, n: usize) -> usize {
        let half = (n / 2).max(1);
        self.read()
            .maps_for(chip_id)
            .map(|m| m.available_low().len().min(m.available_high().len()) / half)
            .sum()
    }

    /// Plans two `n`-location challenges for `chip_id` and persists their
    /// consumption before returning them. Returns `None`, consuming nothing,
    /// if the chip's maps cannot supply both.
    pub fn issue_pair(
        &self,
        chip_id: &str,
        n: usize,
        seeds: [u64; 2],
    ) -> Result<Option<IssuedPair>, HaloError> {
        let mut store = self.inner.write().expect("crp store lock poisoned");
        let mut work: Vec<PageMap> = store.maps_for(chip_id).cloned().collect();
        let mut touched = Vec::new();
        let mut issued = Vec::with_capacity(2);
        for seed in seeds {
            let Some(i) = work.iter().position(|m| m.capacity() >= n) else {
                return Ok(None);
            };
            let t = adaptive_threshold(work[i].enrolled_at_life);
            let (c, e) = plan_challenge(&work[i], seed, n, t)?;
            work[i].consume(&c.locations);
            if !touched.contains(&i) {
                touched.push(i);
            }
            issued.push((c, e));
        }
        store.put_all(touched.into_iter().map(|i| work[i].clone()))?;
        let mut it = issued.into_iter();
        let (c1, e1) = it.next().expect("two issued");
        let (c2, e2) = it.next().expect("two issued");
        Ok(Some(IssuedPair { c1, e1, c2, e2 }))
    }
}
