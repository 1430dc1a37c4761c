//! PUF statistics: uniqueness, reliability, entropy and aging curves.

mod corpus;
mod experiment;
mod report;
mod stats;

pub use corpus::{CorpusEntry, ResponseCorpus};
pub use experiment::{
    aging_sweep, run_study, AgingCurve, AgingPoint, AgingSettings, ChipFactory, PopulationStudy,
    StudySettings, ThresholdPolicy,
};
pub use report::{
    AgingSection, EntropySection, HdPopulation, MetricsReport, ReliabilitySection, ReportFormat,
    REPORT_SCHEMA, REPORT_SCHEMA_VERSION,
};
pub use stats::{
    inter_hd, min_entropy, plugin_entropy, reliability, shannon_entropy, Summary,
    MIN_ENTROPY_RESPONSES,
};

use crate::bits::LengthMismatch;
use crate::flash::FlashError;
use crate::halo::HaloError;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("need at least {needed} responses, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error(transparent)]
    Length(#[from] LengthMismatch),
    #[error("duplicate corpus entry ({chip_id}, {challenge_id}, {trial})")]
    Duplicate {
        chip_id: String,
        challenge_id: u64,
        trial: usize,
    },
    #[error(transparent)]
    Halo(#[from] HaloError),
    #[error(transparent)]
    Flash(#[from] FlashError),
    #[error("invalid experiment settings: {0}")]
    Settings(String),
    #[error("report format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
