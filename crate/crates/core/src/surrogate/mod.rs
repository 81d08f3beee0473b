//! Desk-scale fitness: train a small classifier with a candidate optimizer
//! and score it by validation accuracy, with two early-stopping gates.

pub mod data;
pub mod fitness;
pub mod mlp;

pub use data::{make_dataset, DataConfig, Dataset, DatasetKind, Split};
pub use fitness::{fitness, fitness_after_sweep, full_run, lr_sweep, train_eval, FitnessConfig, FitnessRecord, Stage, SweepResult, TrainOutcome};
pub use mlp::{Activation, ClassifierSpec, Mlp};
