//! Blocking drivers that run the session machines over a transport.

use std::time::{Duration, Instant};

use super::crp::CrpStore;
use super::crypto::{Digest32, NonceSource};
use super::frame::Frame;
use super::message::{Message, ResultStatus};
use super::session::{GatewaySession, SensorSession};
use super::telemetry::{receive_telemetry, TelemetryLog, TelemetryStats};
use super::transport::Transport;
use super::NetError;
use crate::flash::FlashChip;

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayPolicy {
    pub response_bits: usize,
    /// Per-message receive timeout.
    pub timeout: Duration,
    /// Extra sessions a connection may open after a failed one.
    pub retries: u32,
    /// How long a telemetry stream may stay silent.
    pub telemetry_idle: Duration,
}

impl Default for GatewayPolicy {
    fn default() -> Self {
        Self {
            response_bits: 512,
            timeout: Duration::from_secs(5),
            retries: 2,
            telemetry_idle: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorPolicy {
    pub timeout: Duration,
    pub retries: u32,
}

impl Default for SensorPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(5),
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthOutcome {
    Established {
        key: Digest32,
    },
    Failed {
        reason: String,
    },
    /// The gateway had no challenges left for the chip.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthResult {
    pub session_id: u64,
    pub chip_id: String,
    pub outcome: AuthOutcome,
}

impl AuthResult {
    pub fn key(&self) -> Option<Digest32> {
        match self.outcome {
            AuthOutcome::Established { key } => Some(key),
            _ => None,
        }
    }

    pub fn is_established(&self) -> bool {
        self.key().is_some()
    }
}

/// Everything that happened on one gateway connection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConnectionReport {
    pub sessions: Vec<AuthResult>,
    pub telemetry: Option<TelemetryStats>,
    /// Set when the connection ended on a transport or framing error.
    pub error: Option<String>,
}

fn send_all<T: Transport + ?Sized>(t: &mut T, msgs: &[Message], sid: u64) -> Result<(), NetError> {
    msgs.iter().try_for_each(|m| t.send(&m.to_frame(sid)))
}

/// Receives the next frame for `sid`, skipping frames of other sessions.
fn recv_for<T: Transport + ?Sized>(
    t: &mut T,
    sid: Option<u64>,
    timeout: Duration,
) -> Result<Frame, NetError> {
    let deadline = Instant::now() + timeout;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(NetError::Timeout);
        }
        let f = t.recv(left)?;
        if sid.is_none_or(|s| s == f.session_id) {
            return Ok(f);
        }
    }
}

/// Runs one gateway session: waits for HELLO, issues a challenge pair and
/// drives the exchange to RESULT. The second value is the transport error
/// that ended the session, if any; the connection is unusable after one.
fn gateway_session<T: Transport + ?Sized>(
    t: &mut T,
    store: &CrpStore,
    policy: &GatewayPolicy,
    nonces: &mut NonceSource,
) -> Result<(AuthResult, Option<NetError>), NetError> {
    let hello = recv_for(t, None, policy.timeout)?;
    let sid = hello.session_id;
    let chip_id = match Message::from_frame(&hello)? {
        Message::Hello { chip_id } => chip_id,
        other => {
            return Err(NetError::Unexpected {
                got: other.msg_type(),
                state: "awaiting HELLO",
            })
        }
    };
    let result = |outcome| AuthResult {
        session_id: sid,
        chip_id: chip_id.clone(),
        outcome,
    };
    let seeds = [nonces.next_u64(), nonces.next_u64()];
    let Some(pair) = store.issue_pair(&chip_id, policy.response_bits, seeds)? else {
        let msg = Message::Result {
            status: ResultStatus::Exhausted,
            reason: format!(
                "no {}-bit challenges left for {chip_id}",
                policy.response_bits
            ),
        };
        t.send(&msg.to_frame(sid))?;
        return Ok((result(AuthOutcome::Exhausted), None));
    };
    let n2 = nonces.bytes(pair.e1.bits.as_packed().len());
    let (mut session, c1) = GatewaySession::start(sid, &chip_id, pair, n2)?;
    t.send(&c1.to_frame(sid))?;
    let mut fatal = None;
    while !session.is_terminal() {
        match recv_for(t, Some(sid), policy.timeout) {
            Ok(frame) => {
                let out = session.on_frame(&frame)?;
                if let Err(e) = send_all(t, &out, sid) {
                    fatal = Some(e);
                    break;
                }
            }
            Err(e) => {
                let msg = session.fail(e.to_string());
                let _ = t.send(&msg.to_frame(sid));
                fatal = Some(e);
            }
        }
    }
    let outcome = match session.session_key() {
        Some(key) => AuthOutcome::Established { key },
        None => AuthOutcome::Failed {
            reason: session
                .failure_reason()
                .unwrap_or("connection lost")
                .to_string(),
        },
    };
    Ok((result(outcome), fatal))
}

/// One gateway session over `transport`.
pub fn gateway_handle_session<T: Transport + ?Sized>(
    transport: &mut T,
    store: &CrpStore,
    policy: &GatewayPolicy,
    nonces: &mut NonceSource,
) -> Result<AuthResult, NetError> {
    gateway_session(transport, store, policy, nonces).map(|(r, _)| r)
}

/// Serves a whole connection: up to `1 + retries` sessions, then the
/// telemetry stream of the first established one.
pub fn gateway_handle_connection<T: Transport + ?Sized>(
    transport: &mut T,
    store: &CrpStore,
    policy: &GatewayPolicy,
    nonces: &mut NonceSource,
    log: Option<&TelemetryLog>,
) -> ConnectionReport {
    let mut report = ConnectionReport::default();
    for _ in 0..=policy.retries {
        match gateway_session(transport, store, policy, nonces) {
            Ok((r, fatal)) => {
                let key = r.key();
                let exhausted = r.outcome == AuthOutcome::Exhausted;
                let (sid, chip_id) = (r.session_id, r.chip_id.clone());
                report.sessions.push(r);
                if let Some(e) = fatal {
                    report.error = Some(e.to_string());
                    break;
                }
                if let Some(key) = key {
                    match receive_telemetry(
                        transport,
                        sid,
                        &key,
                        &chip_id,
                        log,
                        policy.telemetry_idle,
                    ) {
                        Ok(stats) => report.telemetry = Some(stats),
                        Err(e) => report.error = Some(e.to_string()),
                    }
                    break;
                }
                if exhausted {
                    break;
                }
            }
            Err(NetError::Closed) => break,
            Err(e) => {
                report.error = Some(e.to_string());
                break;
            }
        }
    }
    report
}

/// One sensor attempt. The second value is the transport error that ended
/// it, if any.
fn sensor_attempt<T: Transport + ?Sized>(
    t: &mut T,
    chip: &mut FlashChip,
    chip_id: &str,
    policy: &SensorPolicy,
    nonces: &mut NonceSource,
) -> (AuthResult, Option<NetError>, Option<ResultStatus>) {
    let sid = nonces.next_u64();
    let (mut session, hello) = SensorSession::new(sid, chip_id, nonces.nonce32());
    let mut fatal = t.send(&hello.to_frame(sid)).err();
    if let Some(e) = &fatal {
        session.fail(e.to_string());
    }
    while !session.is_terminal() {
        let step = recv_for(t, Some(sid), policy.timeout).and_then(|f| {
            let out = session.on_frame(&f, chip)?;
            send_all(t, &out, sid)
        });
        if let Err(e) = step {
            session.fail(e.to_string());
            fatal = Some(e);
        }
    }
    let outcome = match session.session_key() {
        Some(key) => AuthOutcome::Established { key },
        None if session.result_status() == Some(ResultStatus::Exhausted) => AuthOutcome::Exhausted,
        None => AuthOutcome::Failed {
            reason: session.failure_reason().unwrap_or("unknown").to_string(),
        },
    };
    let status = session.result_status();
    (
        AuthResult {
            session_id: sid,
            chip_id: chip_id.to_string(),
            outcome,
        },
        fatal,
        status,
    )
}

/// One sensor session, without retries.
pub fn sensor_session<T: Transport + ?Sized>(
    transport: &mut T,
    chip: &mut FlashChip,
    chip_id: &str,
    policy: &SensorPolicy,
    nonces: &mut NonceSource,
) -> AuthResult {
    sensor_attempt(transport, chip, chip_id, policy, nonces).0
}

/// Authenticates, retrying with fresh challenges after a rejected session.
/// Transport errors and an exhausted gateway end the attempts. The decode
/// threshold follows the chip's own wear. Returns every attempt in order.
pub fn sensor_run_auth<T: Transport + ?Sized>(
    transport: &mut T,
    chip: &mut FlashChip,
    chip_id: &str,
    policy: &SensorPolicy,
    nonces: &mut NonceSource,
) -> Vec<AuthResult> {
    let mut attempts = Vec::new();
    for _ in 0..=policy.retries {
        let (r, fatal, status) = sensor_attempt(transport, chip, chip_id, policy, nonces);
        let done = !matches!(r.outcome, AuthOutcome::Failed { .. });
        attempts.push(r);
        if done || fatal.is_some() || status != Some(ResultStatus::Fail) {
            break;
        }
    }
    attempts
}
