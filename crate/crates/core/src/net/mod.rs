//! Gateway/sensor mutual authentication over a framed byte stream.
//!
//! ```text
//! sensor                                   gateway
//!   HELLO {chip_id}                 ->
//!                                   <-     C1 {challenge 1}
//!   M1 = H(R1) xor N1               ->     N1 = M1 xor H(E1)
//!                                   <-     C2 {challenge 2} || E1 xor N2
//!   N2 = mask xor R1
//!   M2 = H(R2 || N1 || N2)          ->     check against H(E2 || N1 || N2)
//!                                   <-     RESULT {ok | fail | exhausted}
//!   key = H(R1 || R2 || N1 || N2)          key = H(E1 || E2 || N1 || N2)
//!   TELEMETRY {.., mac} ...         ->
//! ```
//!
//! Responses never travel in the clear, and both challenges are consumed
//! when issued, so a failed session burns them.

mod crp;
mod crypto;
mod driver;
mod frame;
mod message;
mod server;
mod session;
mod telemetry;
mod transport;

pub use crp::{CrpStore, IssuedPair};
pub use crypto::{
    hash, session_key, telemetry_mac, xor, xor32, Digest32, NonceSource, HASH_LEN, HASH_NAME,
    MAC_LEN, NONCE1_LEN,
};
pub use driver::{
    gateway_handle_connection, gateway_handle_session, sensor_run_auth, sensor_session,
    AuthOutcome, AuthResult, ConnectionReport, GatewayPolicy, SensorPolicy,
};
pub use frame::{Frame, FrameError, MsgType, CRC_LEN, HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION};
pub use message::{Message, ResultStatus, Telemetry};
pub use server::{serve, Gateway};
pub use session::{GatewaySession, GatewayState, SensorSession, SensorState};
pub use telemetry::{
    receive_telemetry, stream_telemetry, TelemetryLog, TelemetryStats, Thermometer,
    MAX_MAC_FAILURES, TELEMETRY_CSV_HEADER,
};
pub use transport::{
    memory_pair, Direction, Fault, FaultHook, Faulty, MemoryTransport, TcpTransport, Transcript,
    Transport,
};

use crate::halo::HaloError;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("frame error: {0}")]
    Frame(#[from] FrameError),
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("connection closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unexpected {got:?} in state {state}")]
    Unexpected { got: MsgType, state: &'static str },
    #[error("frame for session {got:#x} delivered to session {expected:#x}")]
    SessionMismatch { expected: u64, got: u64 },
    #[error(transparent)]
    Halo(#[from] HaloError),
}
