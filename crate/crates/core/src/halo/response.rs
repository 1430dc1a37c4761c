use serde::{Deserialize, Serialize};

use super::enroll::program_and_read;
use super::{decode_byte, Challenge, ExpectedResponse, HaloError, Threshold};
use crate::bits::BitString;
use crate::flash::{FlashChip, PageData, ProgramLevel};

/// Device answer to a challenge, one bit per location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseBits {
    pub challenge_id: u64,
    pub bits: BitString,
}

/// Per-bit majority of the five reads after each program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub low: PageData,
    pub high: PageData,
}

fn majority(reads: &[PageData]) -> PageData {
    let n = reads[0].len();
    let need = reads.len() / 2 + 1;
    let bytes = (0..n)
        .map(|j| {
            (0..8).fold(0u8, |acc, k| {
                let mask = 0x80 >> k;
                let ones = reads.iter().filter(|r| r.bytes()[j] & mask != 0).count();
                if ones >= need {
                    acc | mask
                } else {
                    acc
                }
            })
        })
        .collect();
    PageData::new(bytes)
}

/// One short and one long program with five reads each; leaves the block
/// erased.
pub fn observe_page(chip: &mut FlashChip, block: u32, page: u32) -> Result<Observation, HaloError> {
    let low = program_and_read(chip, block, page, ProgramLevel::Low)?;
    let high = program_and_read(chip, block, page, ProgramLevel::High)?;
    Ok(Observation {
        low: majority(&low),
        high: majority(&high),
    })
}

pub fn decode_observation(
    obs: &Observation,
    challenge: &Challenge,
    t: Threshold,
) -> Result<ResponseBits, HaloError> {
    let n = obs.low.len();
    let bits = challenge
        .locations
        .iter()
        .map(|&j| {
            let j = usize::from(j);
            if j >= n {
                return Err(HaloError::Protocol(format!(
                    "challenge location {j} is outside the {n}-byte page"
                )));
            }
            Ok(decode_byte(obs.low.bytes()[j], obs.high.bytes()[j], t))
        })
        .collect::<Result<BitString, _>>()?;
    Ok(ResponseBits {
        challenge_id: challenge.challenge_id,
        bits,
    })
}

/// Answers a challenge with its own decode threshold.
pub fn generate_response(
    chip: &mut FlashChip,
    challenge: &Challenge,
) -> Result<ResponseBits, HaloError> {
    generate_response_with(chip, challenge, challenge.decode_threshold)
}

pub fn generate_response_with(
    chip: &mut FlashChip,
    challenge: &Challenge,
    t: Threshold,
) -> Result<ResponseBits, HaloError> {
    let n = chip.geometry().data_bytes_per_page;
    if let Some(&j) = challenge.locations.iter().find(|&&j| u32::from(j) >= n) {
        return Err(HaloError::Protocol(format!(
            "challenge location {j} is outside the {n}-byte page"
        )));
    }
    let obs = observe_page(chip, challenge.block, challenge.page)?;
    decode_observation(&obs, challenge, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub exact: bool,
    pub hamming_distance: usize,
}

pub fn verify_response(
    expected: &ExpectedResponse,
    actual: &ResponseBits,
) -> Result<Verdict, HaloError> {
    let hd = expected
        .bits
        .hamming_distance(&actual.bits)
        .map_err(|e| HaloError::Protocol(e.to_string()))?;
    Ok(Verdict {
        exact: hd == 0,
        hamming_distance: hd,
    })
}
