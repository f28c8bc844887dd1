//! End-to-end runs: caption real samples, build prompts, generate a
//! synthetic training set, train on it and evaluate. Also the zero-shot and
//! rewrite variants, guidance sweeps and the published reference tables.
//!
//! Every stage persists its output as a manifest in the run directory
//! before the next stage starts, so an interrupted run resumes where it
//! stopped and produces the same bytes as an uninterrupted one.

mod config;
mod exec;
mod fixture;
mod reference;
mod run;
mod sweep;

pub use config::{BackendsConfig, Mode, PipelineConfig, Strategy, WorldConfig, WorldPreset, WorldSource};
pub use fixture::{
    build_imagenette_fixture, imagenette_config, imagenette_fixtures, FixtureBackend, IMAGENETTE_GLOBAL_SEED,
    IMAGENETTE_GUIDANCE,
};
pub use reference::{reference_lookup, reference_table, ReferenceEntry, REFERENCE_NOTE};
pub use run::{
    run_cip, run_in_memory, run_llm_variant, run_pipeline, run_zero_shot, Evaluation, PipelineReport, RunOptions,
    RunOutcome, StageCounts, PRELIMINARY_GUIDANCE, REPORT_VERSION,
};
pub use sweep::{run_sweep, SweepCell, SweepReport, SweepRow, SweepSpec, DEFAULT_GUIDANCE_GRID};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendError;
use crate::dataman::ManifestError;
use crate::trainer::TrainError;

/// Pipeline stages in execution order. Not every strategy runs every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Real,
    Preliminary,
    Caption,
    Rewrite,
    Prompts,
    Generate,
    Train,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Real,
        Stage::Preliminary,
        Stage::Caption,
        Stage::Rewrite,
        Stage::Prompts,
        Stage::Generate,
        Stage::Train,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Real => "real",
            Stage::Preliminary => "preliminary",
            Stage::Caption => "caption",
            Stage::Rewrite => "rewrite",
            Stage::Prompts => "prompts",
            Stage::Generate => "generate",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }

    /// Checkpoint file written by this stage.
    pub fn file(self) -> &'static str {
        match self {
            Stage::Real => "real.jsonl",
            Stage::Preliminary => "preliminary.jsonl",
            Stage::Caption => "captions.jsonl",
            Stage::Rewrite => "rewrites.jsonl",
            Stage::Prompts => "prompts.jsonl",
            Stage::Generate => "synthetic.jsonl",
            Stage::Train => "classifier.txt",
            Stage::Eval => "report.json",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";
pub const SAMPLES_DIR: &str = "samples";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage}: backend error at records {indices:?}: {source}")]
    Backend {
        stage: Stage,
        indices: Vec<u64>,
        #[source]
        source: BackendError,
    },
    #[error("stage {stage}: records {indices:?}: {message}")]
    Stage { stage: Stage, indices: Vec<u64>, message: String },
    #[error("stage {stage}: {source}")]
    Manifest {
        stage: Stage,
        #[source]
        source: ManifestError,
    },
    #[error("stage {stage}: {source}")]
    Train {
        stage: Stage,
        #[source]
        source: TrainError,
    },
    #[error("io: {0}")]
    Io(String),
}

impl PipelineError {
    /// Process exit code: 2 config, 3 backend, 4 invariant violation, 1
    /// anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Backend { .. } => 3,
            PipelineError::Stage { .. } => 4,
            PipelineError::Manifest { source: ManifestError::Io(_), .. } => 1,
            PipelineError::Manifest { .. } => 4,
            PipelineError::Train { source: TrainError::Io(_), .. } => 1,
            PipelineError::Train { source: TrainError::InvalidConfig(_), .. } => 2,
            PipelineError::Train { .. } => 4,
            PipelineError::Io(_) => 1,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Backend { stage, .. }
            | PipelineError::Stage { stage, .. }
            | PipelineError::Manifest { stage, .. }
            | PipelineError::Train { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn io_error(path: &std::path::Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}
