//! Gateway and sensor entry points.

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use halo_puf::config::RunConfig;
use halo_puf::net::{
    sensor_run_auth, serve, stream_telemetry, AuthOutcome, AuthResult, CrpStore, Gateway,
    GatewayPolicy, NonceSource, SensorPolicy, TcpTransport, TelemetryLog, Thermometer,
};

use crate::commands::{default_chip_id, load_chip, save_chip};
use crate::envelope::ensure_parent;
use crate::error::CliError;

fn describe(r: &AuthResult) -> String {
    let what = match &r.outcome {
        AuthOutcome::Established { .. } => "established".to_string(),
        AuthOutcome::Failed { reason } => format!("failed: {reason}"),
        AuthOutcome::Exhausted => "exhausted".to_string(),
    };
    format!("session {:016x} chip {}: {what}", r.session_id, r.chip_id)
}

fn timeout(cfg: &RunConfig) -> Duration {
    Duration::from_millis(cfg.network.timeout_ms)
}

pub fn gateway(
    cfg: &RunConfig,
    store: Option<PathBuf>,
    connections: Option<usize>,
    telemetry: Option<PathBuf>,
) -> Result<(), CliError> {
    let store_path = store.unwrap_or_else(|| cfg.paths.store.clone());
    ensure_parent(&store_path)?;
    let store = Arc::new(CrpStore::open(&store_path)?);
    let log_path = telemetry.unwrap_or_else(|| cfg.paths.telemetry.clone());
    ensure_parent(&log_path)?;
    let log = Arc::new(TelemetryLog::open(&log_path)?);
    let interval = Duration::from_millis(cfg.network.telemetry_interval_ms);
    let policy = GatewayPolicy {
        response_bits: cfg.experiment.response_bits,
        timeout: timeout(cfg),
        retries: cfg.network.retries,
        telemetry_idle: (3 * interval).max(timeout(cfg)),
    };
    let mut gw = Gateway::new(store, policy);
    gw.log = Some(log);

    let listener = TcpListener::bind((cfg.network.host.as_str(), cfg.network.port))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    serve(listener, Arc::new(gw), connections, |report| {
        let mut out = std::io::stdout().lock();
        for s in &report.sessions {
            let _ = writeln!(out, "{}", describe(s));
        }
        if let Some(t) = &report.telemetry {
            let _ = writeln!(
                out,
                "telemetry: {} accepted, {} rejected{}",
                t.accepted,
                t.rejected,
                if t.terminated { ", terminated" } else { "" }
            );
        }
        if let Some(e) = &report.error {
            let _ = writeln!(out, "connection error: {e}");
        }
        let _ = out.flush();
    })?;
    Ok(())
}

pub fn sensor(
    cfg: &RunConfig,
    chip: Option<PathBuf>,
    chip_id: Option<String>,
) -> Result<(), CliError> {
    let chip_path = chip.unwrap_or_else(|| cfg.paths.chip.clone());
    let mut chip = load_chip(&chip_path)?;
    let chip_id = chip_id.unwrap_or_else(|| default_chip_id(&chip));
    let addr = format!("{}:{}", cfg.network.host, cfg.network.port);
    let mut t = TcpTransport::connect(&addr, timeout(cfg))?;
    let policy = SensorPolicy {
        timeout: timeout(cfg),
        retries: cfg.network.retries,
    };
    let mut nonces = NonceSource::from_entropy();
    let attempts = sensor_run_auth(&mut t, &mut chip, &chip_id, &policy, &mut nonces);
    save_chip(&chip, &chip_path)?;
    for a in &attempts {
        println!("{}", describe(a));
    }
    let last = attempts.last().expect("at least one attempt");
    let Some(key) = last.key() else {
        t.shutdown();
        return Err(CliError::Failed(describe(last)));
    };
    let mut thermometer = Thermometer::seeded(cfg.seeds.fabrication);
    let sent = stream_telemetry(
        &mut t,
        last.session_id,
        &key,
        &mut thermometer,
        cfg.network.telemetry_frames,
        Duration::from_millis(cfg.network.telemetry_interval_ms),
    )?;
    t.shutdown();
    println!("sent {sent} telemetry frames");
    Ok(())
}
