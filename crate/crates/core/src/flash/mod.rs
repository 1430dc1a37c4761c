//! Stochastic model of an MLC NAND chip.
//!
//! Each bit cell has a latent program rate `r` drawn log-normally at
//! fabrication. An interrupted program of `d` ticks adds `r * d` charge plus
//! Gaussian operation noise; a read digitises `bit = 0` iff the charge is at
//! or above the threshold. Weak cells, laid out with exponential gaps along
//! the bit index, flip their digitised value on each read with a fixed
//! probability while their charge sits in a narrow band around the
//! threshold. Wear scales both the program rate and the noise with
//! `life_used = erase_count / pec_rating`.

mod chip;
mod geometry;
mod params;
mod snapshot;

pub(crate) use chip::mix_seed;
pub use chip::{
    FlashChip, InterruptCalibration, OpCounters, PageData, PageLatent, ProgramLevel,
    CALIBRATION_PAGES, CALIBRATION_TOLERANCE, HIGH_PROGRAMMED_TARGET, LOW_PROGRAMMED_TARGET,
};
pub use geometry::Geometry;
pub use params::VariationParams;
pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum FlashError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("address out of range: block {block}{}", page.map(|p| format!(", page {p}")).unwrap_or_default())]
    Address { block: u32, page: Option<u32> },
    #[error("invalid command sequence: {0}")]
    State(String),
    #[error("interrupt calibration failed: {0}")]
    Calibration(String),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
