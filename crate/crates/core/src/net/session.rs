//! Per-session state machines for both ends.
//!
//! Each machine consumes one frame at a time and returns the messages to
//! send. Frames carrying another session's id are rejected without touching
//! state, so several sessions can be driven over interleaved deliveries.

use super::crp::IssuedPair;
use super::crypto::{hash, session_key, xor, xor32, Digest32};
use super::frame::Frame;
use super::message::{Message, ResultStatus};
use super::NetError;
use crate::flash::FlashChip;
use crate::halo::{adaptive_threshold, generate_response_with, Challenge};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayState {
    AwaitR1,
    AwaitR2,
    Established,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorState {
    AwaitC1,
    AwaitC2,
    Established,
    Failed,
}

fn digests_equal(a: &Digest32, b: &Digest32) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn fail_message(reason: &str) -> Message {
    Message::Result {
        status: ResultStatus::Fail,
        reason: reason.to_string(),
    }
}

fn check_session(expected: u64, frame: &Frame) -> Result<(), NetError> {
    if frame.session_id == expected {
        Ok(())
    } else {
        Err(NetError::SessionMismatch {
            expected,
            got: frame.session_id,
        })
    }
}

#[derive(Debug)]
pub struct GatewaySession {
    session_id: u64,
    chip_id: String,
    state: GatewayState,
    pair: IssuedPair,
    n1: Option<Digest32>,
    n2: Vec<u8>,
    key: Option<Digest32>,
    reason: Option<String>,
}

impl GatewaySession {
    /// Starts a session over an already issued pair. `n2` must be as long as
    /// the packed first response. Returns the session and C1.
    pub fn start(
        session_id: u64,
        chip_id: &str,
        pair: IssuedPair,
        n2: Vec<u8>,
    ) -> Result<(Self, Message), NetError> {
        if n2.len() != pair.e1.bits.as_packed().len() {
            return Err(NetError::Protocol(format!(
                "N2 is {} bytes, first response packs to {}",
                n2.len(),
                pair.e1.bits.as_packed().len()
            )));
        }
        let c1 = Message::C1 {
            challenge: pair.c1.clone(),
        };
        Ok((
            Self {
                session_id,
                chip_id: chip_id.to_string(),
                state: GatewayState::AwaitR1,
                pair,
                n1: None,
                n2,
                key: None,
                reason: None,
            },
            c1,
        ))
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn chip_id(&self) -> &str {
        &self.chip_id
    }

    pub fn state(&self) -> GatewayState {
        self.state
    }

    pub fn pair(&self) -> &IssuedPair {
        &self.pair
    }

    /// Defined iff the session is established.
    pub fn session_key(&self) -> Option<Digest32> {
        self.key
    }

    pub fn failure_reason(&self) -> Option<&str> {
        self.reason.as_deref()
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, GatewayState::Established | GatewayState::Failed)
    }

    /// Moves to `Failed` and returns the RESULT to send.
    pub fn fail(&mut self, reason: impl Into<String>) -> Message {
        let reason = reason.into();
        self.state = GatewayState::Failed;
        self.key = None;
        let msg = fail_message(&reason);
        self.reason = Some(reason);
        msg
    }

    pub fn on_frame(&mut self, frame: &Frame) -> Result<Vec<Message>, NetError> {
        check_session(self.session_id, frame)?;
        if self.is_terminal() {
            return Err(NetError::Unexpected {
                got: frame.msg_type,
                state: "terminal",
            });
        }
        let msg = match Message::from_frame(frame) {
            Ok(m) => m,
            Err(e) => return Ok(vec![self.fail(e.to_string())]),
        };
        let e1 = self.pair.e1.bits.as_packed();
        match (self.state, msg) {
            (GatewayState::AwaitR1, Message::M1 { masked }) => {
                self.n1 = Some(xor32(&masked, &hash(&[e1])));
                self.state = GatewayState::AwaitR2;
                Ok(vec![Message::C2 {
                    challenge: self.pair.c2.clone(),
                    masked_nonce: xor(e1, &self.n2),
                }])
            }
            (GatewayState::AwaitR2, Message::M2 { digest }) => {
                let n1 = self.n1.expect("N1 recovered before AwaitR2");
                let e2 = self.pair.e2.bits.as_packed();
                if digests_equal(&digest, &hash(&[e2, &n1, &self.n2])) {
                    self.key = Some(session_key(e1, e2, &n1, &self.n2));
                    self.state = GatewayState::Established;
                    Ok(vec![Message::Result {
                        status: ResultStatus::Ok,
                        reason: String::new(),
                    }])
                } else {
                    Ok(vec![self.fail("second response digest mismatch")])
                }
            }
            (_, Message::Result { reason, .. }) => {
                let reason = format!("sensor aborted: {reason}");
                self.state = GatewayState::Failed;
                self.reason = Some(reason);
                Ok(Vec::new())
            }
            (state, other) => {
                let reason = format!("unexpected {:?} in {state:?}", other.msg_type());
                Ok(vec![self.fail(reason)])
            }
        }
    }
}

#[derive(Debug)]
pub struct SensorSession {
    session_id: u64,
    chip_id: String,
    state: SensorState,
    n1: Digest32,
    r1: Option<Vec<u8>>,
    n2: Option<Vec<u8>>,
    r2: Option<Vec<u8>>,
    key: Option<Digest32>,
    reason: Option<String>,
    status: Option<ResultStatus>,
}

impl SensorSession {
    /// Returns the session and its HELLO.
    pub fn new(session_id: u64, chip_id: &str, n1: Digest32) -> (Self, Message) {
        (
            Self {
                session_id,
                chip_id: chip_id.to_string(),
                state: SensorState::AwaitC1,
                n1,
                r1: None,
                n2: None,
                r2: None,
                key: None,
                reason: None,
                status: None,
            },
            Message::Hello {
                chip_id: chip_id.to_string(),
            },
        )
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn chip_id(&self) -> &str {
        &self.chip_id
    }

    pub fn state(&self) -> SensorState {
        self.state
    }

    pub fn session_key(&self) -> Option<Digest32> {
        self.key
    }

    pub fn failure_reason(&self) -> Option<&str> {
        self.reason.as_deref()
    }

    /// Status of the gateway's RESULT, once received.
    pub fn result_status(&self) -> Option<ResultStatus> {
        self.status
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.state, SensorState::Established | SensorState::Failed)
    }

    pub fn fail(&mut self, reason: impl Into<String>) -> Message {
        let reason = reason.into();
        self.state = SensorState::Failed;
        self.key = None;
        let msg = fail_message(&reason);
        self.reason = Some(reason);
        msg
    }

    fn respond(chip: &mut FlashChip, c: &Challenge) -> Result<Vec<u8>, NetError> {
        let life = chip
            .life_used(c.block)
            .map_err(crate::halo::HaloError::from)?;
        let t = c.decode_threshold.max(adaptive_threshold(life));
        Ok(generate_response_with(chip, c, t)?
            .bits
            .as_packed()
            .to_vec())
    }

    pub fn on_frame(
        &mut self,
        frame: &Frame,
        chip: &mut FlashChip,
    ) -> Result<Vec<Message>, NetError> {
        check_session(self.session_id, frame)?;
        if self.is_terminal() {
            return Err(NetError::Unexpected {
                got: frame.msg_type,
                state: "terminal",
            });
        }
        let msg = match Message::from_frame(frame) {
            Ok(m) => m,
            Err(e) => return Ok(vec![self.fail(e.to_string())]),
        };
        match (self.state, msg) {
            (SensorState::AwaitC1, Message::C1 { challenge }) => {
                let r1 = match Self::respond(chip, &challenge) {
                    Ok(r) => r,
                    Err(e) => return Ok(vec![self.fail(e.to_string())]),
                };
                let masked = xor32(&hash(&[&r1]), &self.n1);
                self.r1 = Some(r1);
                self.state = SensorState::AwaitC2;
                Ok(vec![Message::M1 { masked }])
            }
            (
                SensorState::AwaitC2,
                Message::C2 {
                    challenge,
                    masked_nonce,
                },
            ) if self.r2.is_none() => {
                let r1 = self.r1.as_ref().expect("R1 before AwaitC2");
                if masked_nonce.len() != r1.len() {
                    return Ok(vec![self.fail(format!(
                        "C2 nonce mask is {} bytes, expected {}",
                        masked_nonce.len(),
                        r1.len()
                    ))]);
                }
                let n2 = xor(&masked_nonce, r1);
                let r2 = match Self::respond(chip, &challenge) {
                    Ok(r) => r,
                    Err(e) => return Ok(vec![self.fail(e.to_string())]),
                };
                let digest = hash(&[&r2, &self.n1, &n2]);
                self.n2 = Some(n2);
                self.r2 = Some(r2);
                Ok(vec![Message::M2 { digest }])
            }
            (_, Message::Result { status, reason }) => {
                self.status = Some(status);
                match (status, &self.r2) {
                    (ResultStatus::Ok, Some(r2)) => {
                        let r1 = self.r1.as_ref().expect("R1 before R2");
                        let n2 = self.n2.as_ref().expect("N2 before R2");
                        self.key = Some(session_key(r1, r2, &self.n1, n2));
                        self.state = SensorState::Established;
                    }
                    (ResultStatus::Ok, None) => {
                        self.state = SensorState::Failed;
                        self.reason = Some("RESULT(ok) before the second response".into());
                    }
                    (ResultStatus::Fail, _) => {
                        self.state = SensorState::Failed;
                        self.reason = Some(format!("gateway rejected: {reason}"));
                    }
                    (ResultStatus::Exhausted, _) => {
                        self.state = SensorState::Failed;
                        self.reason = Some(format!("gateway has no challenges left: {reason}"));
                    }
                }
                Ok(Vec::new())
            }
            (state, other) => {
                let reason = format!("unexpected {:?} in {state:?}", other.msg_type());
                Ok(vec![self.fail(reason)])
            }
        }
    }
}
