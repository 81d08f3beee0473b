//! Cheap degeneracy filters run before any expensive evaluation.
//!
//! Genomes must make progress on a shifted sphere `f(x) = Σ (x_i - β_i)^2`
//! under at least one learning rate; decay graphs must stay inside `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{apply_step, init_state};
use crate::graph::{DecayGraph, OptimizerGenome};
use crate::schedules::{eval_decay_graph, Clock};

pub const LR_SWEEP: [f64; 7] = [10.0, 1.0, 0.1, 0.01, 0.001, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereConfig {
    pub dim: usize,
    /// Seed of the uniform[-shift_range, shift_range] shift vector.
    pub shift_seed: u64,
    pub shift_range: f64,
    /// Every coordinate of the starting point.
    pub start: f64,
    pub iters: u64,
    pub lr_set: Vec<f64>,
    pub pass_ratio: f64,
    /// Seed handed to the optimizer state (drives drop ops).
    pub state_seed: u64,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig {
            dim: 100,
            shift_seed: 0,
            shift_range: 2.0,
            start: 0.0,
            iters: 200,
            lr_set: LR_SWEEP.to_vec(),
            pass_ratio: 0.1,
            state_seed: 0,
        }
    }
}

impl SphereConfig {
    pub fn validate(&self) -> Result<(), crate::Error> {
        if self.dim == 0 || self.iters == 0 || self.lr_set.is_empty() || !(self.pass_ratio > 0.0 && self.pass_ratio < 1.0)
        {
            return Err(crate::Error::Config(
                "sphere check needs dim > 0, iters > 0, a nonempty lr set and pass_ratio in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn shifts(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.shift_seed);
        (0..self.dim).map(|_| rng.gen_range(-self.shift_range..=self.shift_range)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityVerdict {
    pub passed: bool,
    pub initial_loss: f64,
    pub best_final_loss: f64,
    pub best_lr: f64,
    /// Final loss per learning rate (non-finite runs reported as infinity).
    pub losses: Vec<(f64, f64)>,
}

fn sphere_loss(x: &[f64], shift: &[f64]) -> f64 {
    x.iter().zip(shift).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Runs the genome from the same start for every learning rate; passes when
/// some final loss is below `pass_ratio * f(x0)`.
pub fn sphere_check(genome: &OptimizerGenome, cfg: &SphereConfig) -> IntegrityVerdict {
    let shift = cfg.shifts();
    let x0 = vec![cfg.start; cfg.dim];
    let initial = sphere_loss(&x0, &shift);
    let mut losses = Vec::with_capacity(cfg.lr_set.len());
    let mut best = (f64::INFINITY, f64::NAN);
    let mut grad = vec![0.0; cfg.dim];
    for &lr in &cfg.lr_set {
        let mut x = x0.clone();
        let mut state = init_state(genome, cfg.dim, cfg.state_seed);
        let mut finite = true;
        for t in 0..cfg.iters {
            for ((gi, xi), bi) in grad.iter_mut().zip(&x).zip(&shift) {
                *gi = 2.0 * (xi - bi);
            }
            let report = apply_step(genome, &mut state, &mut x, &grad, lr, Clock::new(t, cfg.iters));
            if report.nonfinite || x.iter().any(|v| !v.is_finite()) {
                finite = false;
                break;
            }
        }
        let loss = if finite { sphere_loss(&x, &shift) } else { f64::INFINITY };
        let loss = if loss.is_finite() { loss } else { f64::INFINITY };
        if loss < best.0 {
            best = (loss, lr);
        }
        losses.push((lr, loss));
    }
    IntegrityVerdict {
        passed: best.0 < cfg.pass_ratio * initial,
        initial_loss: initial,
        best_final_loss: best.0,
        best_lr: best.1,
        losses,
    }
}

/// True iff the decay graph stays in `[0, 1]` at every `t` in `0..=grid`
/// with horizon `T = grid`.
pub fn decay_range_check(dg: &DecayGraph, grid: u64) -> bool {
    let grid = grid.max(2);
    (0..=grid).all(|t| {
        let v = eval_decay_graph(dg, Clock::new(t, grid));
        (0.0..=1.0).contains(&v)
    })
}

/// Full gate applied to every candidate: decay ranges, then the sphere.
pub fn genome_passes(genome: &OptimizerGenome, sphere: &SphereConfig, decay_grid: u64) -> bool {
    genome.graph.decays().iter().all(|(_, _, dg)| decay_range_check(dg, decay_grid))
        && sphere_check(genome, sphere).passed
}
