use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::bits::{BitString, LengthMismatch};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub chip_id: String,
    pub challenge_id: u64,
    pub trial: usize,
    pub bits: BitString,
}

/// Responses of uniform length, unique per `(chip, challenge, trial)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResponseCorpus {
    entries: Vec<CorpusEntry>,
    keys: BTreeSet<(String, u64, usize)>,
}

impl ResponseCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: CorpusEntry) -> Result<(), MetricsError> {
        if let Some(first) = self.entries.first() {
            if first.bits.len() != entry.bits.len() {
                return Err(LengthMismatch {
                    left: first.bits.len(),
                    right: entry.bits.len(),
                }
                .into());
            }
        }
        let key = (entry.chip_id.clone(), entry.challenge_id, entry.trial);
        if !self.keys.insert(key) {
            return Err(MetricsError::Duplicate {
                chip_id: entry.chip_id,
                challenge_id: entry.challenge_id,
                trial: entry.trial,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn response_bits(&self) -> Option<usize> {
        self.entries.first().map(|e| e.bits.len())
    }

    pub fn bits(&self) -> Vec<BitString> {
        self.entries.iter().map(|e| e.bits.clone()).collect()
    }

    /// First response of each distinct chip, in insertion order.
    pub fn one_per_chip(&self) -> Vec<BitString> {
        let mut seen = BTreeSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.chip_id.clone()))
            .map(|e| e.bits.clone())
            .collect()
    }

    /// All trials of one chip and challenge, ordered by trial index.
    pub fn trials(&self, chip_id: &str, challenge_id: u64) -> Vec<BitString> {
        let mut v: Vec<&CorpusEntry> = self
            .entries
            .iter()
            .filter(|e| e.chip_id == chip_id && e.challenge_id == challenge_id)
            .collect();
        v.sort_by_key(|e| e.trial);
        v.into_iter().map(|e| e.bits.clone()).collect()
    }
}
