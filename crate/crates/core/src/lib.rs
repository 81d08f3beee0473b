//! Evolutionary search over symbolic optimizers.
//!
//! An optimizer is a small computational graph over gradient-derived
//! operands, with optional per-edge decay graphs over training-time
//! schedules. The crate provides the genome representation, an interpreter
//! that steps parameters with it, cheap integrity filters, a surrogate
//! fitness task, a deterministic parallel search and a catalog of known
//! optimizers.

pub mod catalog;
pub mod engine;
pub mod format;
pub mod graph;
pub mod integrity;
pub mod mutation;
pub mod operands;
pub mod ops;
pub mod plot;
pub mod schedules;
pub mod search;
pub mod seed;
pub mod surrogate;

pub use catalog::{build as catalog_build, CatalogEntry};
pub use engine::{apply_step, compute_update, init_state, OptimizerState, StepReport};
pub use format::{deserialize, pretty_print, serialize};
pub use graph::{DecayGraph, GraphError, Momentum, OptimizerGenome, OptimizerGraph};
pub use integrity::{sphere_check, IntegrityVerdict, SphereConfig};
pub use mutation::{mutate, random_init, InitConfig, MutationMask};
pub use schedules::{catalog_lr, eval_schedule, one_cycle, Clock, LrSchedule, OneCycle, ScheduleId};
pub use seed::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid genome: {0}")]
    Invalid(#[from] GraphError),
    #[error("config error: {0}")]
    Config(String),
    #[error("could not build an in-range decay graph in {0} attempts")]
    DecayAttempts(usize),
    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),
    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("run directory {0} is not empty")]
    RunDirNotEmpty(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
