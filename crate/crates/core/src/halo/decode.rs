use std::fmt;

use serde::{Deserialize, Serialize};

use super::HaloError;

/// Decode threshold: the number of agreeing bits (out of 8) needed to
/// classify a byte's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Threshold(u8);

impl Threshold {
    pub const FRESH: Threshold = Threshold(5);
    pub const MID_LIFE: Threshold = Threshold(6);
    pub const END_OF_LIFE: Threshold = Threshold(7);

    pub fn new(t: u8) -> Result<Self, HaloError> {
        match t {
            5..=7 => Ok(Self(t)),
            _ => Err(HaloError::Config(format!(
                "decode threshold must be 5, 6 or 7, got {t}"
            ))),
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Threshold {
    type Error = HaloError;

    fn try_from(t: u8) -> Result<Self, HaloError> {
        Self::new(t)
    }
}

impl From<Threshold> for u8 {
    fn from(t: Threshold) -> u8 {
        t.0
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Decodes one challenge byte from its majority-filtered low-program and
/// high-program readings.
///
/// Low-side evidence is the number of ones left after the short program,
/// high-side evidence the number of zeros after the long one. A byte with
/// enough evidence on exactly one side decodes to that side; with enough on
/// both, the heavier side wins and ties go low; with enough on neither it
/// decodes low.
///
/// ```
/// use halo_puf::halo::{decode_byte, Threshold};
///
/// let t = Threshold::FRESH;
/// assert!(!decode_byte(0xFF, 0xFF, t)); // resisted both programs
/// assert!(decode_byte(0x00, 0x00, t)); // programmed both times
/// assert!(!decode_byte(0xFF, 0x00, t)); // tie decodes low
/// assert!(!decode_byte(0b1110_0011, 0xFF, t)); // three errors tolerated
/// ```
pub fn decode_byte(byte_low: u8, byte_high: u8, t: Threshold) -> bool {
    let w_low = byte_low.count_ones() as u8;
    let w_high = byte_high.count_zeros() as u8;
    let t = t.0;
    match (w_low >= t, w_high >= t) {
        (true, false) => false,
        (false, true) => true,
        (true, true) => w_high > w_low,
        (false, false) => false,
    }
}

/// Threshold for a block that has used `life` of its rated cycles.
pub fn adaptive_threshold(life: f64) -> Threshold {
    if life >= 0.9 {
        Threshold::END_OF_LIFE
    } else if life >= 0.5 {
        Threshold::MID_LIFE
    } else {
        Threshold::FRESH
    }
}
