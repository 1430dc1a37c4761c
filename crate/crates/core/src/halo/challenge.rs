use rand::seq::{index, SliceRandom};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HaloError, Threshold};
use crate::bits::BitString;

/// Stable-byte map of one enrolled page, as held by the gateway.
///
/// Field order is the canonical record order of the map store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageMap {
    pub chip_id: String,
    pub block: u32,
    pub page: u32,
    /// Sorted byte indices that resist the short program.
    pub low_bytes: Vec<u16>,
    /// Sorted byte indices that accept the long program.
    pub high_bytes: Vec<u16>,
    /// Sorted byte indices already sent in a challenge.
    pub consumed: Vec<u16>,
    pub enrolled_at_life: f64,
}

impl PageMap {
    pub fn usable(&self) -> usize {
        self.low_bytes.len() + self.high_bytes.len()
    }

    pub fn is_consumed(&self, j: u16) -> bool {
        self.consumed.binary_search(&j).is_ok()
    }

    pub fn available_low(&self) -> Vec<u16> {
        self.low_bytes
            .iter()
            .copied()
            .filter(|&j| !self.is_consumed(j))
            .collect()
    }

    pub fn available_high(&self) -> Vec<u16> {
        self.high_bytes
            .iter()
            .copied()
            .filter(|&j| !self.is_consumed(j))
            .collect()
    }

    /// Largest even challenge that can still be drawn.
    pub fn capacity(&self) -> usize {
        2 * self.available_low().len().min(self.available_high().len())
    }

    /// Marks locations as used. Already-consumed indices are ignored.
    pub fn consume(&mut self, locations: &[u16]) {
        self.consumed.extend_from_slice(locations);
        self.consumed.sort_unstable();
        self.consumed.dedup();
    }

    pub fn validate(&self) -> Result<(), HaloError> {
        let sorted = |v: &[u16]| v.windows(2).all(|w| w[0] < w[1]);
        if !sorted(&self.low_bytes) || !sorted(&self.high_bytes) || !sorted(&self.consumed) {
            return Err(HaloError::Store(
                "map index lists must be strictly increasing".into(),
            ));
        }
        if self
            .low_bytes
            .iter()
            .any(|j| self.high_bytes.binary_search(j).is_ok())
        {
            return Err(HaloError::Store("low and high byte sets overlap".into()));
        }
        Ok(())
    }
}

/// A challenge as sent to the device: a page address and location list with
/// no polarity labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub challenge_id: u64,
    pub block: u32,
    pub page: u32,
    pub locations: Vec<u16>,
    pub decode_threshold: Threshold,
}

const CHALLENGE_HEADER: usize = 8 + 4 + 4 + 1 + 2;

impl Challenge {
    /// Big-endian wire form: id, block, page, threshold, count, locations.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.challenge_id.to_be_bytes());
        out.extend_from_slice(&self.block.to_be_bytes());
        out.extend_from_slice(&self.page.to_be_bytes());
        out.push(self.decode_threshold.get());
        out.extend_from_slice(&(self.locations.len() as u16).to_be_bytes());
        for j in &self.locations {
            out.extend_from_slice(&j.to_be_bytes());
        }
        out
    }

    pub fn encoded_len(&self) -> usize {
        CHALLENGE_HEADER + 2 * self.locations.len()
    }

    /// Parses a challenge from the front of `buf`, returning it with the
    /// number of bytes used.
    pub fn decode_prefix(buf: &[u8]) -> Result<(Self, usize), HaloError> {
        let short = || HaloError::Protocol("challenge truncated".into());
        if buf.len() < CHALLENGE_HEADER {
            return Err(short());
        }
        let challenge_id = u64::from_be_bytes(buf[0..8].try_into().expect("8 bytes"));
        let block = u32::from_be_bytes(buf[8..12].try_into().expect("4 bytes"));
        let page = u32::from_be_bytes(buf[12..16].try_into().expect("4 bytes"));
        let decode_threshold =
            Threshold::new(buf[16]).map_err(|e| HaloError::Protocol(e.to_string()))?;
        let count = usize::from(u16::from_be_bytes([buf[17], buf[18]]));
        let end = CHALLENGE_HEADER + 2 * count;
        if buf.len() < end {
            return Err(short());
        }
        let locations = buf[CHALLENGE_HEADER..end]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        let c = Self {
            challenge_id,
            block,
            page,
            locations,
            decode_threshold,
        };
        c.check_locations()?;
        Ok((c, end))
    }

    pub fn decode(buf: &[u8]) -> Result<Self, HaloError> {
        let (c, used) = Self::decode_prefix(buf)?;
        if used != buf.len() {
            return Err(HaloError::Protocol("trailing bytes after challenge".into()));
        }
        Ok(c)
    }

    fn check_locations(&self) -> Result<(), HaloError> {
        if self.locations.is_empty() || !self.locations.len().is_multiple_of(2) {
            return Err(HaloError::Protocol(format!(
                "challenge location count {} is not a positive even number",
                self.locations.len()
            )));
        }
        let mut sorted = self.locations.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(HaloError::Protocol("duplicate challenge location".into()));
        }
        Ok(())
    }
}

/// The response the gateway expects: `1` where the location is high side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedResponse {
    pub challenge_id: u64,
    pub bits: BitString,
}

/// Draws a challenge from `map` without consuming it.
///
/// `n` locations are sampled, half from each side, uniformly without
/// replacement from the unconsumed indices. The location order is a seeded
/// shuffle of the sorted location set, so it carries no polarity.
pub fn plan_challenge(
    map: &PageMap,
    seed: u64,
    n: usize,
    t: Threshold,
) -> Result<(Challenge, ExpectedResponse), HaloError> {
    if n == 0 || !n.is_multiple_of(2) || n > usize::from(u16::MAX) {
        return Err(HaloError::Config(format!(
            "challenge length must be a positive even count, got {n}"
        )));
    }
    let half = n / 2;
    let low = map.available_low();
    let high = map.available_high();
    if low.len() < half || high.len() < half {
        return Err(HaloError::MapExhausted {
            needed: half,
            low: low.len(),
            high: high.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let challenge_id = rng.next_u64();
    let mut locations: Vec<u16> = index::sample(&mut rng, low.len(), half)
        .iter()
        .map(|i| low[i])
        .chain(
            index::sample(&mut rng, high.len(), half)
                .iter()
                .map(|i| high[i]),
        )
        .collect();
    locations.sort_unstable();
    locations.shuffle(&mut rng);
    let bits = locations
        .iter()
        .map(|j| map.high_bytes.binary_search(j).is_ok())
        .collect();
    Ok((
        Challenge {
            challenge_id,
            block: map.block,
            page: map.page,
            locations,
            decode_threshold: t,
        },
        ExpectedResponse { challenge_id, bits },
    ))
}

/// Draws a challenge and marks its locations consumed.
pub fn build_challenge(
    map: &mut PageMap,
    seed: u64,
    n: usize,
    t: Threshold,
) -> Result<(Challenge, ExpectedResponse), HaloError> {
    let out = plan_challenge(map, seed, n, t)?;
    map.consume(&out.0.locations);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn map(low: Vec<u16>, high: Vec<u16>) -> PageMap {
        PageMap {
            chip_id: "chip".into(),
            block: 3,
            page: 9,
            low_bytes: low,
            high_bytes: high,
            consumed: Vec::new(),
            enrolled_at_life: 0.0,
        }
    }

    fn big_map() -> PageMap {
        map(
            (0..600).step_by(2).collect(),
            (1..1200)
                .step_by(3)
                .collect::<Vec<u16>>()
                .into_iter()
                .filter(|j| j % 2 == 1)
                .collect(),
        )
    }

    #[test]
    fn full_challenge_has_balanced_expectation_and_fits_a_frame() {
        let mut m = map((0..700).collect(), (1000..1700).collect());
        let (c, e) = build_challenge(&mut m, 42, 512, Threshold::FRESH).unwrap();
        assert_eq!(c.locations.len(), 512);
        assert_eq!(e.bits.count_ones(), 256);
        assert_eq!(e.challenge_id, c.challenge_id);
        assert!(c.encode().len() <= 1500, "{}", c.encode().len());
        assert_eq!(Challenge::decode(&c.encode()).unwrap(), c);
    }

    #[test]
    fn smallest_challenge_exhausts_singleton_map() {
        let mut m = map(vec![4], vec![7]);
        let (c, e) = build_challenge(&mut m, 1, 2, Threshold::FRESH).unwrap();
        let mut locs = c.locations.clone();
        locs.sort();
        assert_eq!(locs, vec![4, 7]);
        assert_eq!(e.bits.count_ones(), 1);
        assert!(matches!(
            build_challenge(&mut m, 2, 2, Threshold::FRESH),
            Err(HaloError::MapExhausted { .. })
        ));
    }

    #[test]
    fn polarity_is_not_serialized() {
        let a = map((0..40).collect(), (40..80).collect());
        let b = map((40..80).collect(), (0..40).collect());
        // Same location set and seed on swapped maps.
        let (ca, ea) = plan_challenge(&a, 5, 80, Threshold::FRESH).unwrap();
        let (cb, eb) = plan_challenge(&b, 5, 80, Threshold::FRESH).unwrap();
        assert_eq!(ca.encode(), cb.encode());
        assert_eq!(ea.bits.complement(), eb.bits);
    }

    #[test]
    fn bad_lengths_and_wire_errors() {
        let m = big_map();
        for n in [0, 3] {
            assert!(matches!(
                plan_challenge(&m, 0, n, Threshold::FRESH),
                Err(HaloError::Config(_))
            ));
        }
        let (c, _) = plan_challenge(&m, 0, 8, Threshold::FRESH).unwrap();
        let wire = c.encode();
        assert!(Challenge::decode(&wire[..wire.len() - 1]).is_err());
        let mut dup = c.clone();
        dup.locations[1] = dup.locations[0];
        assert!(Challenge::decode(&dup.encode()).is_err());
        let mut bad_t = wire.clone();
        bad_t[16] = 9;
        assert!(Challenge::decode(&bad_t).is_err());
    }

    proptest! {
        #[test]
        fn locations_are_never_reissued(seeds in proptest::collection::vec(any::<u64>(), 1..12), n in 1usize..20) {
            let mut m = big_map();
            let mut seen = std::collections::BTreeSet::new();
            for s in seeds {
                match build_challenge(&mut m, s, 2 * n, Threshold::FRESH) {
                    Ok((c, e)) => {
                        for (k, j) in c.locations.iter().enumerate() {
                            prop_assert!(seen.insert(*j));
                            prop_assert_eq!(e.bits.get(k), m.high_bytes.contains(j));
                        }
                    }
                    Err(HaloError::MapExhausted { .. }) => break,
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            }
            prop_assert!(m.validate().is_ok());
        }
    }
}
