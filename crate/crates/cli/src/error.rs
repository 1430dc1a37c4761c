use std::process::ExitCode;

use halo_puf::config::ConfigError;
use halo_puf::flash::FlashError;
use halo_puf::halo::HaloError;
use halo_puf::metrics::MetricsError;
use halo_puf::net::NetError;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Io(String),
    /// Protocol, verification or exhaustion failure.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io(_) => 4,
            CliError::Failed(_) => 5,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Failed(m) => write!(f, "failed: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Io(format!("malformed file: {e}"))
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<FlashError> for CliError {
    fn from(e: FlashError) -> Self {
        match e {
            FlashError::Io(_) | FlashError::Snapshot(_) => CliError::Io(e.to_string()),
            FlashError::Config(_) | FlashError::Calibration(_) => CliError::Config(e.to_string()),
            FlashError::Address { .. } => CliError::Usage(e.to_string()),
            FlashError::State(_) => CliError::Failed(e.to_string()),
        }
    }
}

impl From<HaloError> for CliError {
    fn from(e: HaloError) -> Self {
        match e {
            HaloError::Flash(f) => f.into(),
            HaloError::Io(_) | HaloError::Store(_) => CliError::Io(e.to_string()),
            HaloError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(_) => CliError::Io(e.to_string()),
            MetricsError::Settings(_) | MetricsError::TooFew { .. } => {
                CliError::Config(e.to_string())
            }
            MetricsError::Halo(h) => h.into(),
            MetricsError::Flash(f) => f.into(),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Io(_) => CliError::Io(e.to_string()),
            NetError::Halo(h) => h.into(),
            _ => CliError::Failed(e.to_string()),
        }
    }
}
