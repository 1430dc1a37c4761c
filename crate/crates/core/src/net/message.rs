//! Typed protocol messages and their payload encodings.

use super::crypto::{Digest32, HASH_LEN, MAC_LEN};
use super::frame::{Frame, MsgType, MAX_PAYLOAD};
use super::NetError;
use crate::halo::Challenge;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ResultStatus {
    Ok = 0,
    Fail = 1,
    Exhausted = 2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Telemetry {
    pub timestamp_ms: u64,
    pub temp_milli_celsius: i32,
    pub seq: u32,
    pub mac: [u8; MAC_LEN],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    /// Opens a session: the sensor names the chip it claims to be.
    Hello {
        chip_id: String,
    },
    C1 {
        challenge: Challenge,
    },
    /// `H(R1) xor N1`.
    M1 {
        masked: Digest32,
    },
    /// Second challenge plus `E1 xor N2`.
    C2 {
        challenge: Challenge,
        masked_nonce: Vec<u8>,
    },
    /// `H(R2 || N1 || N2)`.
    M2 {
        digest: Digest32,
    },
    Result {
        status: ResultStatus,
        reason: String,
    },
    Telemetry(Telemetry),
}

fn protocol(msg: impl Into<String>) -> NetError {
    NetError::Protocol(msg.into())
}

fn digest(buf: &[u8], what: &str) -> Result<Digest32, NetError> {
    buf.try_into().map_err(|_| {
        protocol(format!(
            "{what} payload must be {HASH_LEN} bytes, got {}",
            buf.len()
        ))
    })
}

fn short_string(buf: &[u8], what: &str) -> Result<String, NetError> {
    if buf.len() < 2 {
        return Err(protocol(format!("{what} truncated")));
    }
    let n = usize::from(u16::from_be_bytes([buf[0], buf[1]]));
    if buf.len() != 2 + n {
        return Err(protocol(format!("{what} length mismatch")));
    }
    String::from_utf8(buf[2..].to_vec()).map_err(|_| protocol(format!("{what} is not UTF-8")))
}

fn push_short_string(out: &mut Vec<u8>, s: &str) {
    let max = MAX_PAYLOAD - 8;
    let mut end = s.len().min(max);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    out.extend_from_slice(&(end as u16).to_be_bytes());
    out.extend_from_slice(&s.as_bytes()[..end]);
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::Hello { .. } => MsgType::Hello,
            Message::C1 { .. } => MsgType::C1,
            Message::M1 { .. } => MsgType::M1,
            Message::C2 { .. } => MsgType::C2,
            Message::M2 { .. } => MsgType::M2,
            Message::Result { .. } => MsgType::Result,
            Message::Telemetry(_) => MsgType::Telemetry,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Hello { chip_id } => push_short_string(&mut out, chip_id),
            Message::C1 { challenge } => out = challenge.encode(),
            Message::M1 { masked } => out.extend_from_slice(masked),
            Message::C2 {
                challenge,
                masked_nonce,
            } => {
                out = challenge.encode();
                out.extend_from_slice(masked_nonce);
            }
            Message::M2 { digest } => out.extend_from_slice(digest),
            Message::Result { status, reason } => {
                out.push(*status as u8);
                push_short_string(&mut out, reason);
            }
            Message::Telemetry(t) => {
                out.extend_from_slice(&t.timestamp_ms.to_be_bytes());
                out.extend_from_slice(&t.temp_milli_celsius.to_be_bytes());
                out.extend_from_slice(&t.seq.to_be_bytes());
                out.extend_from_slice(&t.mac);
            }
        }
        out
    }

    pub fn to_frame(&self, session_id: u64) -> Frame {
        Frame::new(self.msg_type(), session_id, self.payload())
    }

    pub fn from_frame(frame: &Frame) -> Result<Self, NetError> {
        let p = &frame.payload[..];
        let challenge =
            |buf: &[u8]| Challenge::decode_prefix(buf).map_err(|e| protocol(e.to_string()));
        Ok(match frame.msg_type {
            MsgType::Hello => Message::Hello {
                chip_id: short_string(p, "hello chip id")?,
            },
            MsgType::C1 => {
                let (c, used) = challenge(p)?;
                if used != p.len() {
                    return Err(protocol("trailing bytes after C1 challenge"));
                }
                Message::C1 { challenge: c }
            }
            MsgType::M1 => Message::M1 {
                masked: digest(p, "M1")?,
            },
            MsgType::C2 => {
                let (c, used) = challenge(p)?;
                Message::C2 {
                    challenge: c,
                    masked_nonce: p[used..].to_vec(),
                }
            }
            MsgType::M2 => Message::M2 {
                digest: digest(p, "M2")?,
            },
            MsgType::Result => {
                let (&status, rest) = p.split_first().ok_or_else(|| protocol("empty RESULT"))?;
                let status = match status {
                    0 => ResultStatus::Ok,
                    1 => ResultStatus::Fail,
                    2 => ResultStatus::Exhausted,
                    s => return Err(protocol(format!("unknown RESULT status {s}"))),
                };
                Message::Result {
                    status,
                    reason: short_string(rest, "RESULT reason")?,
                }
            }
            MsgType::Telemetry => {
                if p.len() != 8 + 4 + 4 + MAC_LEN {
                    return Err(protocol(format!("TELEMETRY payload of {} bytes", p.len())));
                }
                Message::Telemetry(Telemetry {
                    timestamp_ms: u64::from_be_bytes(p[0..8].try_into().expect("8")),
                    temp_milli_celsius: i32::from_be_bytes(p[8..12].try_into().expect("4")),
                    seq: u32::from_be_bytes(p[12..16].try_into().expect("4")),
                    mac: p[16..].try_into().expect("16"),
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::halo::Threshold;

    fn challenge() -> Challenge {
        Challenge {
            challenge_id: 77,
            block: 2,
            page: 5,
            locations: (0..512).map(|i| i * 7).collect(),
            decode_threshold: Threshold::MID_LIFE,
        }
    }

    #[test]
    fn every_type_round_trips() {
        let msgs = vec![
            Message::Hello {
                chip_id: "chip-1".into(),
            },
            Message::C1 {
                challenge: challenge(),
            },
            Message::M1 { masked: [3; 32] },
            Message::C2 {
                challenge: challenge(),
                masked_nonce: vec![9; 64],
            },
            Message::M2 { digest: [4; 32] },
            Message::Result {
                status: ResultStatus::Exhausted,
                reason: "no maps left".into(),
            },
            Message::Telemetry(Telemetry {
                timestamp_ms: 1_700_000_000_000,
                temp_milli_celsius: -4250,
                seq: 12,
                mac: [7; 16],
            }),
        ];
        for m in msgs {
            let frame = m.to_frame(42);
            let decoded = Frame::decode(&frame.encode()).unwrap();
            assert_eq!(Message::from_frame(&decoded).unwrap(), m);
        }
    }

    #[test]
    fn malformed_payloads() {
        for (t, p) in [
            (MsgType::M1, vec![0u8; 31]),
            (MsgType::Result, vec![7, 0, 0]),
            (MsgType::Telemetry, vec![0; 10]),
            (MsgType::Hello, vec![0, 5, b'a']),
            (MsgType::C1, vec![1, 2, 3]),
        ] {
            assert!(Message::from_frame(&Frame::new(t, 1, p)).is_err(), "{t:?}");
        }
    }
}
