//! Hashing, masking and key derivation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Name of the project-wide hash, echoed in configs and logs.
pub const HASH_NAME: &str = "sha256";
pub const HASH_LEN: usize = 32;
pub const NONCE1_LEN: usize = HASH_LEN;
pub const MAC_LEN: usize = 16;

pub type Digest32 = [u8; HASH_LEN];

/// SHA-256 over the concatenation of `parts`.
pub fn hash(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Byte-wise XOR of two equal-length strings.
pub fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    assert_eq!(a.len(), b.len(), "xor operands differ in length");
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

pub fn xor32(a: &Digest32, b: &Digest32) -> Digest32 {
    std::array::from_fn(|i| a[i] ^ b[i])
}

/// `H(r1 || r2 || n1 || n2)`, computed by both ends from their own view of
/// the responses.
pub fn session_key(r1: &[u8], r2: &[u8], n1: &[u8], n2: &[u8]) -> Digest32 {
    hash(&[r1, r2, n1, n2])
}

/// First [`MAC_LEN`] bytes of `H(key || seq || timestamp || temp)`.
pub fn telemetry_mac(
    key: &Digest32,
    seq: u32,
    timestamp_ms: u64,
    temp_milli: i32,
) -> [u8; MAC_LEN] {
    let d = hash(&[
        key,
        &seq.to_be_bytes(),
        &timestamp_ms.to_be_bytes(),
        &temp_milli.to_be_bytes(),
    ]);
    d[..MAC_LEN].try_into().expect("prefix")
}

/// Nonce and session-id generator.
pub struct NonceSource(ChaCha20Rng);

impl NonceSource {
    /// Seeded from operating-system entropy.
    pub fn from_entropy() -> Self {
        Self(ChaCha20Rng::from_rng(&mut rand::rng()))
    }

    /// Reproducible source for tests and simulations.
    pub fn seeded(seed: u64) -> Self {
        Self(ChaCha20Rng::seed_from_u64(seed))
    }

    pub fn bytes(&mut self, n: usize) -> Vec<u8> {
        let mut v = vec![0u8; n];
        self.0.fill_bytes(&mut v);
        v
    }

    pub fn nonce32(&mut self) -> Digest32 {
        let mut v = [0u8; HASH_LEN];
        self.0.fill_bytes(&mut v);
        v
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}

impl std::fmt::Debug for NonceSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("NonceSource(..)")
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn known_digest() {
        let d = hash(&[b"ab", b"c"]);
        assert_eq!(d[..8], [0xba, 0x78, 0x16, 0xbf, 0x8f, 0x01, 0xcf, 0xea]);
    }

    #[test]
    fn seeded_sources_repeat() {
        let mut a = NonceSource::seeded(4);
        let mut b = NonceSource::seeded(4);
        assert_eq!(a.nonce32(), b.nonce32());
        assert_ne!(
            NonceSource::from_entropy().nonce32(),
            NonceSource::from_entropy().nonce32()
        );
    }

    proptest! {
        #[test]
        fn nonce_recovery_algebra(r in proptest::collection::vec(any::<u8>(), 1..80), n1 in any::<[u8; 32]>(), seed in any::<u64>()) {
            let h = hash(&[&r]);
            prop_assert_eq!(xor32(&xor32(&h, &n1), &h), n1);
            let n2 = NonceSource::seeded(seed).bytes(r.len());
            prop_assert_eq!(xor(&xor(&r, &n2), &r), n2);
        }

        #[test]
        fn mac_binds_every_field(key in any::<[u8; 32]>(), seq in any::<u32>(), ts in any::<u64>(), t in any::<i32>()) {
            let m = telemetry_mac(&key, seq, ts, t);
            prop_assert_ne!(m, telemetry_mac(&key, seq.wrapping_add(1), ts, t));
            prop_assert_ne!(m, telemetry_mac(&key, seq, ts ^ 1, t));
            prop_assert_ne!(m, telemetry_mac(&key, seq, ts, t.wrapping_add(1)));
        }
    }
}
