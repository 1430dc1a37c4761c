//! Binary frame codec.
//!
//! ```text
//! "HALO" | version u8 | type u8 | session_id u64 | payload_len u32 | payload | crc32 u32
//! ```
//!
//! Integers are big-endian; the CRC (ISO 3309 / IEEE polynomial) covers the
//! header and payload.

use std::io::Read;

pub const MAGIC: &[u8; 4] = b"HALO";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 4;
pub const CRC_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    C1 = 1,
    M1 = 2,
    C2 = 3,
    M2 = 4,
    Result = 5,
    Telemetry = 6,
    Hello = 7,
}

impl TryFrom<u8> for MsgType {
    type Error = FrameError;

    fn try_from(v: u8) -> Result<Self, FrameError> {
        Ok(match v {
            1 => Self::C1,
            2 => Self::M1,
            3 => Self::C2,
            4 => Self::M2,
            5 => Self::Result,
            6 => Self::Telemetry,
            7 => Self::Hello,
            other => return Err(FrameError::UnknownType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("length error: header declares {declared} payload bytes, {available} available")]
    Length { declared: usize, available: usize },
    #[error("CRC mismatch: frame carries {carried:08x}, computed {computed:08x}")]
    Crc { carried: u32, computed: u32 },
}

impl FrameError {
    /// Stable numeric code per error class.
    pub fn code(&self) -> u8 {
        match self {
            FrameError::BadMagic(_) => 1,
            FrameError::BadVersion(_) => 2,
            FrameError::UnknownType(_) => 3,
            FrameError::Length { .. } => 4,
            FrameError::Crc { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub session_id: u64,
    pub payload: Vec<u8>,
}

struct Header {
    msg_type: MsgType,
    session_id: u64,
    payload_len: usize,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header, FrameError> {
    let magic: [u8; 4] = h[0..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(FrameError::BadVersion(h[4]));
    }
    let msg_type = MsgType::try_from(h[5])?;
    let session_id = u64::from_be_bytes(h[6..14].try_into().expect("8 bytes"));
    let payload_len = u32::from_be_bytes(h[14..18].try_into().expect("4 bytes")) as usize;
    if payload_len > MAX_PAYLOAD {
        return Err(FrameError::Length {
            declared: payload_len,
            available: MAX_PAYLOAD,
        });
    }
    Ok(Header {
        msg_type,
        session_id,
        payload_len,
    })
}

fn check_crc(covered: &[u8], carried: [u8; 4]) -> Result<(), FrameError> {
    let carried = u32::from_be_bytes(carried);
    let computed = crc32fast::hash(covered);
    if carried != computed {
        return Err(FrameError::Crc { carried, computed });
    }
    Ok(())
}

impl Frame {
    pub fn new(msg_type: MsgType, session_id: u64, payload: Vec<u8>) -> Self {
        Self {
            msg_type,
            session_id,
            payload,
        }
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CRC_LEN
    }

    /// Encodes the frame. Panics if the payload exceeds [`MAX_PAYLOAD`];
    /// message constructors never build such payloads.
    pub fn encode(&self) -> Vec<u8> {
        assert!(
            self.payload.len() <= MAX_PAYLOAD,
            "payload of {} bytes",
            self.payload.len()
        );
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }

    /// Decodes exactly one frame occupying all of `buf`.
    pub fn decode(buf: &[u8]) -> Result<Self, FrameError> {
        if buf.len() < HEADER_LEN {
            return Err(FrameError::Length {
                declared: HEADER_LEN,
                available: buf.len(),
            });
        }
        let header = parse_header(buf[..HEADER_LEN].try_into().expect("header length"))?;
        let body = buf.len() - HEADER_LEN;
        if body != header.payload_len + CRC_LEN {
            return Err(FrameError::Length {
                declared: header.payload_len,
                available: body.saturating_sub(CRC_LEN),
            });
        }
        let end = HEADER_LEN + header.payload_len;
        check_crc(&buf[..end], buf[end..].try_into().expect("crc length"))?;
        Ok(Self {
            msg_type: header.msg_type,
            session_id: header.session_id,
            payload: buf[HEADER_LEN..end].to_vec(),
        })
    }

    /// Reads one frame from a byte stream.
    pub fn read_from<R: Read>(r: &mut R) -> std::io::Result<Result<Self, FrameError>> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let h = match parse_header(&header) {
            Ok(h) => h,
            Err(e) => return Ok(Err(e)),
        };
        let mut rest = vec![0u8; h.payload_len + CRC_LEN];
        r.read_exact(&mut rest)?;
        let crc: [u8; 4] = rest[h.payload_len..].try_into().expect("crc length");
        rest.truncate(h.payload_len);
        let mut covered = header.to_vec();
        covered.extend_from_slice(&rest);
        if let Err(e) = check_crc(&covered, crc) {
            return Ok(Err(e));
        }
        Ok(Ok(Self {
            msg_type: h.msg_type,
            session_id: h.session_id,
            payload: rest,
        }))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    const TYPES: [MsgType; 7] = [
        MsgType::C1,
        MsgType::M1,
        MsgType::C2,
        MsgType::M2,
        MsgType::Result,
        MsgType::Telemetry,
        MsgType::Hello,
    ];

    #[test]
    fn header_layout() {
        let f = Frame::new(MsgType::M1, 0x0102_0304_0506_0708, vec![0xAA, 0xBB]);
        let wire = f.encode();
        assert_eq!(&wire[..4], b"HALO");
        assert_eq!(wire[4], 1);
        assert_eq!(wire[5], 2);
        assert_eq!(&wire[6..14], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(&wire[14..18], &[0, 0, 0, 2]);
        assert_eq!(&wire[18..20], &[0xAA, 0xBB]);
        assert_eq!(
            u32::from_be_bytes(wire[20..24].try_into().unwrap()),
            crc32fast::hash(&wire[..20])
        );
    }

    #[test]
    fn errors_are_distinct() {
        let wire = Frame::new(MsgType::C1, 9, vec![1, 2, 3]).encode();
        let mut e = Vec::new();

        let mut bad = wire.clone();
        bad[0] = b'X';
        e.push(Frame::decode(&bad).unwrap_err());
        let mut bad = wire.clone();
        bad[4] = 2;
        e.push(Frame::decode(&bad).unwrap_err());
        let mut bad = wire.clone();
        bad[5] = 99;
        e.push(Frame::decode(&bad).unwrap_err());
        e.push(Frame::decode(&wire[..wire.len() - 1]).unwrap_err());
        let mut bad = wire.clone();
        bad[19] ^= 0x10;
        e.push(Frame::decode(&bad).unwrap_err());

        let codes: Vec<u8> = e.iter().map(FrameError::code).collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 5]);
        assert!(matches!(e[3], FrameError::Length { .. }));
        assert!(matches!(e[4], FrameError::Crc { .. }));
    }

    #[test]
    fn oversized_length_is_rejected_before_reading() {
        let mut wire = Frame::new(MsgType::M2, 1, vec![]).encode();
        wire[14..18].copy_from_slice(&(MAX_PAYLOAD as u32 + 1).to_be_bytes());
        let mut cursor = std::io::Cursor::new(wire);
        assert!(matches!(
            Frame::read_from(&mut cursor).unwrap(),
            Err(FrameError::Length { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip(t in 0usize..7, sid in any::<u64>(), payload in proptest::collection::vec(any::<u8>(), 0..300)) {
            let f = Frame::new(TYPES[t], sid, payload);
            let wire = f.encode();
            prop_assert_eq!(Frame::decode(&wire).unwrap(), f.clone());
            let mut cursor = std::io::Cursor::new(wire);
            prop_assert_eq!(Frame::read_from(&mut cursor).unwrap().unwrap(), f);
        }

        #[test]
        fn any_single_bit_flip_is_detected(payload in proptest::collection::vec(any::<u8>(), 1..64), bit in any::<usize>()) {
            let wire = Frame::new(MsgType::Telemetry, 3, payload).encode();
            let mut bad = wire.clone();
            let bit = bit % (wire.len() * 8);
            bad[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(Frame::decode(&bad).is_err());
        }
    }
}
