//! Versioned JSON wrapper for every file the CLI writes.

use std::fs;
use std::path::Path;

use halo_puf::config::RunConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub body: T,
}

pub fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write<T: Serialize>(
    path: &Path,
    format: &str,
    config: &RunConfig,
    body: T,
) -> Result<(), CliError> {
    let env = Envelope {
        format: format.to_string(),
        version: FORMAT_VERSION,
        config: config.clone(),
        body,
    };
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read<T: DeserializeOwned>(path: &Path, format: &str) -> Result<Envelope<T>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: malformed file: {e}", path.display())))?;
    if env.format != format {
        return Err(CliError::Io(format!(
            "{}: expected a {format} file, found {}",
            path.display(),
            env.format
        )));
    }
    if env.version != FORMAT_VERSION {
        return Err(CliError::Io(format!(
            "{}: unsupported format version {}",
            path.display(),
            env.version
        )));
    }
    Ok(env)
}
