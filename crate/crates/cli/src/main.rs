//! `halo`: fabricate simulated chips, enroll them, run challenges, metrics
//! and benchmarks, and run the gateway and sensor ends of the protocol.

mod commands;
mod envelope;
mod error;
mod network;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use halo_puf::config::RunConfig;
use halo_puf::metrics::ReportFormat;

use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "halo",
    version,
    about = "Flash-memory PUF simulator and authentication toolkit"
)]
struct Cli {
    /// TOML run configuration; built-in defaults if omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fabricate a chip and write its snapshot.
    Fabricate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enroll pages of a chip and append their maps to the store.
    Enroll {
        #[arg(long)]
        chip: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        chip_id: Option<String>,
        #[arg(long, default_value_t = 1)]
        pages: usize,
    },
    /// Draw a challenge from the store; writes the challenge and the
    /// gateway-side expected response.
    Challenge {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        chip_id: String,
        #[arg(long)]
        bits: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        expected: PathBuf,
    },
    /// Answer a challenge file with a chip snapshot.
    Respond {
        #[arg(long)]
        chip: Option<PathBuf>,
        #[arg(long)]
        challenge: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a response with the expected one.
    Verify {
        #[arg(long)]
        expected: PathBuf,
        #[arg(long)]
        response: PathBuf,
    },
    /// Apply program/erase cycles to a block.
    Age {
        #[arg(long)]
        chip: Option<PathBuf>,
        #[arg(long)]
        block: u32,
        /// Cycles to add.
        #[arg(long, conflicts_with = "life", required_unless_present = "life")]
        cycles: Option<u32>,
        /// Target fraction of rated life.
        #[arg(long)]
        life: Option<f64>,
    },
    /// Run the uniqueness, reliability, entropy and aging experiments.
    Metrics {
        #[arg(long, value_parser = parse_format, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        chips: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Time simulated response generation.
    Bench {
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve authentication sessions and log telemetry.
    Gateway {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        /// Overrides the config and `HALO_PORT`; 0 picks a free port.
        #[arg(long)]
        port: Option<u16>,
        /// Exit after this many connections.
        #[arg(long)]
        connections: Option<usize>,
        #[arg(long)]
        telemetry: Option<PathBuf>,
    },
    /// Authenticate to a gateway, then stream telemetry.
    Sensor {
        #[arg(long)]
        chip: Option<PathBuf>,
        #[arg(long)]
        chip_id: Option<String>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        frames: Option<u32>,
        #[arg(long)]
        interval_ms: Option<u64>,
    },
    /// Rewrite the map store with one record per page.
    Compact {
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
        .map_err(|e: halo_puf::metrics::MetricsError| e.to_string())
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Ok(port) = std::env::var("HALO_PORT") {
        cfg.network.port = port
            .parse()
            .map_err(|_| CliError::Config(format!("HALO_PORT={port:?} is not a port number")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Fabricate { seed, out } => {
            if let Some(s) = seed {
                cfg.seeds.fabrication = s;
            }
            commands::fabricate(&cfg, out)
        }
        Command::Enroll {
            chip,
            store,
            chip_id,
            pages,
        } => commands::enroll(&cfg, chip, store, chip_id, pages),
        Command::Challenge {
            store,
            chip_id,
            bits,
            seed,
            out,
            expected,
        } => commands::challenge(&cfg, store, &chip_id, bits, seed, &out, &expected),
        Command::Respond {
            chip,
            challenge,
            out,
        } => commands::respond(&cfg, chip, &challenge, &out),
        Command::Verify { expected, response } => commands::verify(&expected, &response),
        Command::Age {
            chip,
            block,
            cycles,
            life,
        } => commands::age(&cfg, chip, block, cycles, life),
        Command::Metrics {
            format,
            out,
            chips,
            trials,
        } => {
            if let Some(c) = chips {
                cfg.experiment.chips = c;
            }
            if let Some(t) = trials {
                cfg.experiment.trials = t;
            }
            cfg.validate()?;
            commands::metrics(&cfg, format, out)
        }
        Command::Bench { iterations, out } => {
            if let Some(n) = iterations {
                cfg.experiment.bench_iterations = n;
            }
            commands::bench(&cfg, out)
        }
        Command::Gateway {
            store,
            host,
            port,
            connections,
            telemetry,
        } => {
            if let Some(h) = host {
                cfg.network.host = h;
            }
            if let Some(p) = port {
                cfg.network.port = p;
            }
            network::gateway(&cfg, store, connections, telemetry)
        }
        Command::Sensor {
            chip,
            chip_id,
            host,
            port,
            frames,
            interval_ms,
        } => {
            if let Some(h) = host {
                cfg.network.host = h;
            }
            if let Some(p) = port {
                cfg.network.port = p;
            }
            if let Some(f) = frames {
                cfg.network.telemetry_frames = f;
            }
            if let Some(i) = interval_ms {
                cfg.network.telemetry_interval_ms = i;
            }
            network::sensor(&cfg, chip, chip_id)
        }
        Command::Compact { store } => commands::compact(&cfg, store),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("halo: {e}");
            e.exit_code()
        }
    }
}
