//! Enrollment, challenge construction, response generation and decoding.
//!
//! A page is programmed five times with the short interrupt and five times
//! with the long one, reading each program five times. Bytes that read
//! `0xFF` in all 25 short-program signatures resist programming (low side);
//! bytes that read `0x00` in all 25 long-program signatures program readily
//! (high side). Bytes stable on both sides are dropped. The gateway keeps the
//! two lists as a map and sends challenges as unlabeled location lists; the
//! device answers with one bit per location, `0` for low side and `1` for
//! high side.

mod challenge;
mod decode;
mod enroll;
mod response;
mod store;

pub use challenge::{build_challenge, plan_challenge, Challenge, ExpectedResponse, PageMap};
pub use decode::{adaptive_threshold, decode_byte, Threshold};
pub use enroll::{
    collect_signatures, enroll_block, enroll_page, enroll_pages, enrollment_order, EnrollStats,
    Enrollment, SignatureSet, DEFAULT_MIN_QUOTA, PROGRAMS_PER_SIDE, READS_PER_PROGRAM,
    SIGNATURES_PER_SIDE,
};
pub use response::{
    decode_observation, generate_response, generate_response_with, observe_page, verify_response,
    Observation, ResponseBits, Verdict,
};
pub use store::MapStore;

use crate::bits::LengthMismatch;
use crate::flash::FlashError;

#[derive(Debug, thiserror::Error)]
pub enum HaloError {
    #[error(transparent)]
    Flash(#[from] FlashError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("page {block}/{page} rejected: insufficient stable bytes ({low} low, {high} high, quota {quota})")]
    InsufficientStableBytes {
        block: u32,
        page: u32,
        low: usize,
        high: usize,
        quota: usize,
    },
    #[error("map exhausted: need {needed} locations per side, {low} low and {high} high remain")]
    MapExhausted {
        needed: usize,
        low: usize,
        high: usize,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Length(#[from] LengthMismatch),
    #[error("map store: {0}")]
    Store(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
