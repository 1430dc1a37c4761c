//! Packed bit strings.
//!
//! Bit `0` is the most significant bit of byte `0`; trailing padding bits in
//! the last byte are always zero.

use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// A fixed-length string of bits stored MSB-first.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    len: usize,
    bytes: Vec<u8>,
}

/// Returned when two bit strings that must agree in length do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("bit length mismatch: {left} vs {right}")]
pub struct LengthMismatch {
    pub left: usize,
    pub right: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            bytes: vec![0; len.div_ceil(8)],
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = Self::zeros(0);
        for bit in bits {
            out.push(bit);
        }
        out
    }

    /// Rebuilds a bit string from its packed form. Padding bits must be zero.
    pub fn from_packed(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let s = Self {
            len,
            bytes: bytes.to_vec(),
        };
        let pad = s.bytes.len() * 8 - len;
        if pad > 0 && s.bytes[s.bytes.len() - 1] & ((1u8 << pad) - 1) != 0 {
            return None;
        }
        Some(s)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.bytes[i >> 3] & (0x80 >> (i & 7)) != 0
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 0x80 >> (i & 7);
        if bit {
            self.bytes[i >> 3] |= mask;
        } else {
            self.bytes[i >> 3] &= !mask;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Packed big-endian bytes, padding bits zero.
    pub fn as_packed(&self) -> &[u8] {
        &self.bytes
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn hamming_distance(&self, other: &Self) -> Result<usize, LengthMismatch> {
        if self.len != other.len {
            return Err(LengthMismatch {
                left: self.len,
                right: other.len,
            });
        }
        Ok(self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    pub fn complement(&self) -> Self {
        Self::from_bits(self.iter().map(|b| !b))
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str, len: usize) -> Option<Self> {
        if !hex.len().is_multiple_of(2) {
            return None;
        }
        let bytes = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(hex.get(i..i + 2)?, 16).ok())
            .collect::<Option<Vec<u8>>>()?;
        Self::from_packed(&bytes, len)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({}; ", self.len)?;
        for bit in self.iter().take(64) {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        if self.len > 64 {
            f.write_str("...")?;
        }
        f.write_str(")")
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bits(iter)
    }
}

#[derive(Serialize, Deserialize)]
struct PackedRepr {
    len: usize,
    hex: String,
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PackedRepr {
            len: self.len,
            hex: self.to_hex(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PackedRepr::deserialize(deserializer)?;
        BitString::from_hex(&repr.hex, repr.len)
            .ok_or_else(|| de::Error::custom("malformed packed bit string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first_packing_with_zero_padding() {
        let s = BitString::from_bits([true, false, true]);
        assert_eq!(s.as_packed(), &[0b1010_0000]);
        assert!(BitString::from_packed(&[0b1010_0001], 3).is_none());
    }

    #[test]
    fn hamming_distance_rejects_length_mismatch() {
        let a = BitString::zeros(8);
        let b = BitString::zeros(9);
        assert!(a.hamming_distance(&b).is_err());
    }

    proptest! {
        #[test]
        fn packed_and_hex_forms_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let s = BitString::from_bits(bits.iter().copied());
            let back = BitString::from_packed(s.as_packed(), s.len()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(BitString::from_hex(&s.to_hex(), s.len()).unwrap(), s.clone());
            prop_assert_eq!(s.hamming_distance(&s.complement()).unwrap(), s.len());
        }
    }
}
