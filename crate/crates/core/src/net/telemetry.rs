//! Authenticated temperature stream after a session is established.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use chrono::{DateTime, SecondsFormat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::crypto::{telemetry_mac, Digest32};
use super::message::{Message, Telemetry};
use super::transport::Transport;
use super::NetError;

pub const TELEMETRY_CSV_HEADER: &str = "timestamp,celsius,chip_id";
/// Consecutive MAC failures after which the gateway drops the stream.
pub const MAX_MAC_FAILURES: u32 = 3;

/// Synthetic temperature source: a bounded random walk around 21.5 C.
#[derive(Debug, Clone)]
pub struct Thermometer {
    rng: ChaCha8Rng,
    milli: i32,
}

impl Thermometer {
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            milli: 21_500,
        }
    }

    /// Next reading in thousandths of a degree Celsius.
    pub fn read_milli(&mut self) -> i32 {
        self.milli = (self.milli + self.rng.random_range(-125..=125)).clamp(15_000, 30_000);
        self.milli
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Sends `frames` readings, one every `interval` (the first immediately).
pub fn stream_telemetry<T: Transport + ?Sized>(
    transport: &mut T,
    session_id: u64,
    key: &Digest32,
    thermometer: &mut Thermometer,
    frames: u32,
    interval: Duration,
) -> Result<u32, NetError> {
    for seq in 0..frames {
        if seq > 0 {
            std::thread::sleep(interval);
        }
        let timestamp_ms = now_ms();
        let temp = thermometer.read_milli();
        let msg = Message::Telemetry(Telemetry {
            timestamp_ms,
            temp_milli_celsius: temp,
            seq,
            mac: telemetry_mac(key, seq, timestamp_ms, temp),
        });
        transport.send(&msg.to_frame(session_id))?;
    }
    Ok(frames)
}

/// CSV sink shared by all gateway sessions.
pub struct TelemetryLog {
    writer: Mutex<csv::Writer<Box<dyn Write + Send>>>,
}

impl std::fmt::Debug for TelemetryLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TelemetryLog(..)")
    }
}

impl TelemetryLog {
    /// Appends to `path`, writing the header if the file is new or empty.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        Self::from_writer(Box::new(file), fresh)
    }

    pub fn from_writer(w: Box<dyn Write + Send>, write_header: bool) -> Result<Self, NetError> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        if write_header {
            writer
                .write_record(TELEMETRY_CSV_HEADER.split(','))
                .map_err(csv_err)?;
            writer.flush()?;
        }
        Ok(Self {
            writer: Mutex::new(writer),
        })
    }

    pub fn append(
        &self,
        timestamp_ms: u64,
        temp_milli_celsius: i32,
        chip_id: &str,
    ) -> Result<(), NetError> {
        let ts = DateTime::from_timestamp_millis(timestamp_ms as i64)
            .map(|t| t.to_rfc3339_opts(SecondsFormat::Millis, true))
            .unwrap_or_else(|| timestamp_ms.to_string());
        let celsius = format!("{:.3}", f64::from(temp_milli_celsius) / 1000.0);
        let mut w = self.writer.lock().expect("telemetry log lock");
        w.write_record([ts.as_str(), celsius.as_str(), chip_id])
            .map_err(csv_err)?;
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> NetError {
    NetError::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TelemetryStats {
    pub accepted: u32,
    pub rejected: u32,
    /// Stopped after [`MAX_MAC_FAILURES`] consecutive bad MACs.
    pub terminated: bool,
}

/// Verifies and logs readings until the peer closes, goes quiet for
/// `idle`, or sends too many bad MACs in a row.
pub fn receive_telemetry<T: Transport + ?Sized>(
    transport: &mut T,
    session_id: u64,
    key: &Digest32,
    chip_id: &str,
    log: Option<&TelemetryLog>,
    idle: Duration,
) -> Result<TelemetryStats, NetError> {
    let mut stats = TelemetryStats::default();
    let mut consecutive = 0;
    loop {
        let frame = match transport.recv(idle) {
            Ok(f) => f,
            Err(NetError::Closed | NetError::Timeout) => return Ok(stats),
            Err(e) => return Err(e),
        };
        if frame.session_id != session_id {
            continue;
        }
        let Message::Telemetry(t) = Message::from_frame(&frame)? else {
            return Err(NetError::Protocol(format!(
                "{:?} during telemetry",
                frame.msg_type
            )));
        };
        if telemetry_mac(key, t.seq, t.timestamp_ms, t.temp_milli_celsius) == t.mac {
            consecutive = 0;
            stats.accepted += 1;
            if let Some(log) = log {
                log.append(t.timestamp_ms, t.temp_milli_celsius, chip_id)?;
            }
        } else {
            consecutive += 1;
            stats.rejected += 1;
            if consecutive >= MAX_MAC_FAILURES {
                stats.terminated = true;
                return Ok(stats);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::transport::memory_pair;

    fn run(sender_key: Digest32, frames: u32) -> (TelemetryStats, String) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let log = TelemetryLog::open(&path).unwrap();
        let (mut a, mut b) = memory_pair();
        let sender = std::thread::spawn(move || {
            let mut th = Thermometer::seeded(1);
            // The gateway may hang up early; later sends then fail.
            let _ = stream_telemetry(&mut a, 9, &sender_key, &mut th, frames, Duration::ZERO);
        });
        let stats = receive_telemetry(
            &mut b,
            9,
            &[1; 32],
            "chip-1",
            Some(&log),
            Duration::from_millis(500),
        )
        .unwrap();
        drop(b);
        sender.join().unwrap();
        (stats, std::fs::read_to_string(&path).unwrap())
    }

    #[test]
    fn right_key_accepts_every_frame() {
        let (stats, csv) = run([1; 32], 100);
        assert_eq!(
            stats,
            TelemetryStats {
                accepted: 100,
                rejected: 0,
                terminated: false
            }
        );
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TELEMETRY_CSV_HEADER);
        assert_eq!(lines.len() - 1, 100);
        assert!(lines[1].ends_with(",chip-1"));
        assert!(lines[1].contains('T') && lines[1].contains("Z,"));
    }

    #[test]
    fn wrong_key_terminates_after_three() {
        let (stats, csv) = run([2; 32], 100);
        assert_eq!(
            stats,
            TelemetryStats {
                accepted: 0,
                rejected: 3,
                terminated: true
            }
        );
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn thermometer_is_reproducible_and_bounded() {
        let a: Vec<i32> = {
            let mut t = Thermometer::seeded(4);
            (0..500).map(|_| t.read_milli()).collect()
        };
        let b: Vec<i32> = {
            let mut t = Thermometer::seeded(4);
            (0..500).map(|_| t.read_milli()).collect()
        };
        assert_eq!(a, b);
        assert!(a.iter().all(|m| (15_000..=30_000).contains(m)));
    }
}
