//! Particle-based genetic search.
//!
//! Each particle is an independent lineage. At every timestep a particle
//! produces `k` mutated children (each re-drawn until it passes the
//! integrity gates and the learning-rate sweep), and moves to the fittest
//! child regardless of its own fitness. All randomness is keyed by
//! `(phase, particle, timestep, child)` so results do not depend on the
//! number of worker threads.

mod eliminate;
mod run;

pub use eliminate::{eliminate, EliminationResult, EliminationStage, RankedGenome};
pub use run::{
    enlarged_init, ga_step, read_history, replay, resume_search, run_search, run_search_in, Checkpoint, ChildRecord,
    InitRecord, Particle, RunManifest, SearchRun, StepOutcome,
};

use serde::{Deserialize, Serialize};

use crate::integrity::SphereConfig;
use crate::mutation::{InitConfig, MutationMask};
use crate::surrogate::{DataConfig, FitnessConfig};
use crate::Error;

pub(crate) const PHASE_INIT: u64 = 0;
pub(crate) const PHASE_GA: u64 = 1;
pub(crate) const PHASE_ELIMINATE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Number of particles.
    pub n: usize,
    /// Mutated children per particle per timestep.
    pub k: usize,
    /// Timesteps.
    pub t: usize,
    /// Enlarged initialization draws `init_factor * n` candidates.
    pub init_factor: usize,
    /// Budget multiplier for scoring initialization candidates.
    pub init_budget_scale: f64,
    /// Random draws per initialization candidate before giving up.
    pub init_attempts: usize,
    /// Mutation attempts per child slot before the slot is skipped.
    pub child_attempts: usize,
    pub seed: u64,
    /// Catalog entry every particle starts from, replacing random init.
    pub seed_genome: Option<String>,
    pub mask: MutationMask,
    pub init: InitConfig,
    pub sphere: SphereConfig,
    pub data: DataConfig,
    pub fitness: FitnessConfig,
    pub stages: Vec<EliminationStage>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n: 4,
            k: 4,
            t: 3,
            init_factor: 10,
            init_budget_scale: 0.1,
            init_attempts: 1000,
            child_attempts: 20,
            seed: 0,
            seed_genome: None,
            mask: MutationMask::Full,
            init: InitConfig::default(),
            sphere: SphereConfig::default(),
            data: DataConfig::default(),
            fitness: FitnessConfig::default(),
            stages: vec![
                EliminationStage { keep: 2, base: 16, budget_scale: 1.0, repeats: 3 },
                EliminationStage { keep: 1, base: 32, budget_scale: 1.0, repeats: 3 },
            ],
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.n == 0 || self.k == 0 || self.t == 0 {
            return Err(Error::Config("n, k and t must be at least 1".into()));
        }
        if self.init_factor == 0 {
            return Err(Error::Config("init_factor must be at least 1".into()));
        }
        if self.init_attempts == 0 || self.child_attempts == 0 {
            return Err(Error::Config("attempt caps must be positive".into()));
        }
        if !(self.init_budget_scale > 0.0) {
            return Err(Error::Config("init_budget_scale must be positive".into()));
        }
        if let Some(name) = &self.seed_genome {
            crate::catalog::build(name)?;
        }
        self.sphere.validate()?;
        self.fitness.validate()?;
        eliminate::validate_stages(&self.stages, None)?;
        Ok(())
    }
}
