//! Seeded Monte Carlo experiments over the `upsense-core` pipeline.
//!
//! An [`ExperimentSpec`] names a scene, a numerology, an SNR sweep, optional
//! extra sweep axes and a list of pipeline variants. Every trial draws its
//! own seeds from the master seed and its index, so any trial can be replayed
//! on its own. Trials run in parallel and are collected in index order, which
//! keeps the output files byte-identical across runs.

use thiserror::Error;

mod plot;
pub mod presets;
pub mod run;
pub mod spec;
pub mod trial;

pub use presets::{preset, PRESET_NAMES};
pub use run::{run_experiment, write_outputs, RunOutput, SummaryRow};
pub use spec::{ExperimentKind, ExperimentSpec};
pub use trial::{run_trial, TrialRecord, TrialSeeds};

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("bad value `{value}` for `{key}`")]
    Value { key: String, value: String },

    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("line {line}: {source}")]
    AtLine { line: usize, source: Box<HarnessError> },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid experiment: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] upsense_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
