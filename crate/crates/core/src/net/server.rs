//! TCP gateway: one thread per connection over a shared store.

use std::net::TcpListener;
use std::sync::Arc;

use super::crp::CrpStore;
use super::crypto::NonceSource;
use super::driver::{gateway_handle_connection, ConnectionReport, GatewayPolicy};
use super::telemetry::TelemetryLog;
use super::transport::{TcpTransport, Transport};
use crate::flash::mix_seed;

#[derive(Debug)]
pub struct Gateway {
    pub store: Arc<CrpStore>,
    pub policy: GatewayPolicy,
    pub log: Option<Arc<TelemetryLog>>,
    /// Fixed nonce seed for reproducible runs; OS entropy when `None`.
    pub nonce_seed: Option<u64>,
}

impl Gateway {
    pub fn new(store: Arc<CrpStore>, policy: GatewayPolicy) -> Self {
        Self {
            store,
            policy,
            log: None,
            nonce_seed: None,
        }
    }

    /// Serves one connection; `index` distinguishes nonce streams.
    pub fn handle<T: Transport + ?Sized>(&self, transport: &mut T, index: u64) -> ConnectionReport {
        let mut nonces = match self.nonce_seed {
            Some(s) => NonceSource::seeded(mix_seed(s ^ index)),
            None => NonceSource::from_entropy(),
        };
        gateway_handle_connection(
            transport,
            &self.store,
            &self.policy,
            &mut nonces,
            self.log.as_deref(),
        )
    }
}

/// Accepts connections until `limit` have been served (forever if `None`),
/// calling `on_report` as each finishes. Returns the reports in accept order.
pub fn serve<F>(
    listener: TcpListener,
    gateway: Arc<Gateway>,
    limit: Option<usize>,
    on_report: F,
) -> std::io::Result<Vec<ConnectionReport>>
where
    F: Fn(&ConnectionReport) + Send + Sync + 'static,
{
    let on_report = Arc::new(on_report);
    let mut handles = Vec::new();
    for (index, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let gateway = gateway.clone();
        let on_report = on_report.clone();
        handles.push(std::thread::spawn(move || {
            let report = match TcpTransport::new(stream) {
                Ok(mut t) => {
                    let r = gateway.handle(&mut t, index as u64);
                    t.shutdown();
                    r
                }
                Err(e) => ConnectionReport {
                    error: Some(e.to_string()),
                    ..Default::default()
                },
            };
            on_report(&report);
            report
        }));
        if limit.is_some_and(|l| handles.len() >= l) {
            break;
        }
    }
    Ok(handles
        .into_iter()
        .map(|h| h.join().expect("connection thread panicked"))
        .collect())
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::flash::{FlashChip, Geometry, VariationParams};
    use crate::halo::{enroll_pages, enrollment_order, MapStore, DEFAULT_MIN_QUOTA};
    use crate::net::driver::{sensor_run_auth, SensorPolicy};

    #[test]
    fn concurrent_tcp_sensors() {
        let g = Geometry {
            blocks_per_chip: 5,
            pages_per_block: 8,
            data_bytes_per_page: 4096,
            spare_bytes_per_page: 224,
        };
        let store = Arc::new(CrpStore::new(MapStore::in_memory()));
        let mut chips = Vec::new();
        for i in 0..3u64 {
            let mut c = FlashChip::fabricate(g, VariationParams::default(), 100 + i).unwrap();
            let id = format!("chip-{i}");
            let e = enroll_pages(&mut c, &id, enrollment_order(&g), 2, DEFAULT_MIN_QUOTA).unwrap();
            store.enroll(e.into_iter().map(|e| e.map)).unwrap();
            chips.push((id, c));
        }
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let mut gw = Gateway::new(
            store,
            GatewayPolicy {
                retries: 0,
                telemetry_idle: Duration::from_millis(100),
                ..Default::default()
            },
        );
        gw.nonce_seed = Some(1);
        let server =
            std::thread::spawn(move || serve(listener, Arc::new(gw), Some(3), |_| {}).unwrap());
        let clients: Vec<_> = chips
            .into_iter()
            .enumerate()
            .map(|(i, (id, mut c))| {
                let addr = addr.clone();
                std::thread::spawn(move || {
                    let mut t = TcpTransport::connect(&addr, Duration::from_secs(5)).unwrap();
                    let mut nonces = NonceSource::seeded(i as u64);
                    let policy = SensorPolicy {
                        retries: 0,
                        ..Default::default()
                    };
                    let r = sensor_run_auth(&mut t, &mut c, &id, &policy, &mut nonces);
                    t.shutdown();
                    r
                })
            })
            .collect();
        let sensor_keys: Vec<_> = clients
            .into_iter()
            .map(|h| h.join().unwrap()[0].key().unwrap())
            .collect();
        let reports = server.join().unwrap();
        let mut gateway_keys: Vec<_> = reports
            .iter()
            .map(|r| r.sessions[0].key().unwrap())
            .collect();
        let mut sorted = sensor_keys.clone();
        sorted.sort();
        gateway_keys.sort();
        assert_eq!(sorted, gateway_keys);
    }
}
