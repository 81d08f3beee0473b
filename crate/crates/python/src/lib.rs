//! Python bindings. Genomes cross the boundary as their canonical JSON text;
//! anywhere a genome is expected, a catalog name works too.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use optevo::engine::{compute_update, init_state, update_emas};
use optevo::integrity::SphereConfig;
use optevo::mutation::{InitConfig, MutationMask};
use optevo::schedules::{Clock, ScheduleId};
use optevo::surrogate::{make_dataset, DataConfig, DatasetKind, FitnessConfig};
use optevo::OptimizerGenome;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn genome(text: &str) -> PyResult<OptimizerGenome> {
    if text.trim_start().starts_with('{') {
        optevo::deserialize(text).map_err(err)
    } else {
        optevo::catalog::build(text).map(|e| e.genome).map_err(err)
    }
}

/// Names of every catalog entry.
#[pyfunction]
fn catalog_names() -> Vec<&'static str> {
    optevo::catalog::names()
}

/// Canonical JSON of a genome (or catalog entry).
#[pyfunction]
fn export(genome_text: &str) -> PyResult<String> {
    Ok(optevo::serialize(&genome(genome_text)?))
}

/// Human-readable formula.
#[pyfunction]
fn pretty_print(genome_text: &str) -> PyResult<String> {
    Ok(optevo::pretty_print(&genome(genome_text)?))
}

/// Shifted-sphere check with default settings: `(passed, best_lr, best_final_loss)`.
#[pyfunction]
fn sphere_check(genome_text: &str) -> PyResult<(bool, f64, f64)> {
    let v = optevo::sphere_check(&genome(genome_text)?, &SphereConfig::default());
    Ok((v.passed, v.best_lr, v.best_final_loss))
}

/// Update vectors for a gradient trace with weights held at `w`.
#[pyfunction]
#[pyo3(signature = (genome_text, grads, w = 0.0))]
fn eval_trace(genome_text: &str, grads: Vec<Vec<f64>>, w: f64) -> PyResult<Vec<Vec<f64>>> {
    let g = genome(genome_text)?;
    let n = grads.first().map_or(0, Vec::len);
    if n == 0 || grads.iter().any(|r| r.len() != n) {
        return Err(err("grads must be a non-empty rectangular list"));
    }
    let mut state = init_state(&g, n, 0);
    let wv = vec![w; n];
    let total = grads.len() as u64;
    Ok(grads
        .iter()
        .enumerate()
        .map(|(t, gr)| {
            update_emas(&mut state, gr);
            let (u, _) = compute_update(&g, &mut state, gr, &wv, Clock::new(t as u64, total));
            state.step += 1;
            u
        })
        .collect())
}

/// Value of a primitive decay schedule at step `t` of `total`.
#[pyfunction]
fn schedule(name: &str, t: u64, total: u64) -> PyResult<f64> {
    let id = ScheduleId::from_name(name).ok_or_else(|| err(format!("unknown schedule `{name}`")))?;
    let clock = Clock::try_new(t, total).ok_or_else(|| err("need 0 <= t <= total and total > 0"))?;
    Ok(id.eval(clock))
}

/// Random genome as JSON.
#[pyfunction]
fn random_genome(seed: u64) -> PyResult<String> {
    let g = optevo::random_init(&mut ChaCha8Rng::seed_from_u64(seed), &InitConfig::default()).map_err(err)?;
    Ok(optevo::serialize(&g))
}

/// One mutation of a genome, as JSON.
#[pyfunction]
#[pyo3(signature = (genome_text, seed, decay_only = false))]
fn mutate(genome_text: &str, seed: u64, decay_only: bool) -> PyResult<String> {
    let mask = if decay_only { MutationMask::DecayOnly } else { MutationMask::Full };
    let g = genome(genome_text)?;
    let child = optevo::mutation::mutate_with(&g, &mut ChaCha8Rng::seed_from_u64(seed), mask, &InitConfig::default());
    Ok(optevo::serialize(&child))
}

/// Surrogate fitness: `(best_val_acc, best_lr, stage_reached, steps_run)`.
#[pyfunction]
#[pyo3(signature = (genome_text, dataset = "two_moons", budget_scale = 1.0, seed = 0))]
fn fitness(genome_text: &str, dataset: &str, budget_scale: f64, seed: u64) -> PyResult<(f64, f64, String, u64)> {
    let g = genome(genome_text)?;
    let kind = DatasetKind::from_name(dataset).ok_or_else(|| err(format!("unknown dataset `{dataset}`")))?;
    let data = make_dataset(&DataConfig { kind, ..Default::default() }).map_err(err)?;
    if !(budget_scale > 0.0) {
        return Err(err("budget_scale must be positive"));
    }
    let cfg = FitnessConfig { seed, ..FitnessConfig::default().scaled(budget_scale) };
    let r = optevo::surrogate::fitness(&g, &data, &cfg);
    let stage = match r.stage_reached {
        optevo::surrogate::Stage::LrSweepFailed => "lr_sweep_failed",
        optevo::surrogate::Stage::Aborted => "aborted",
        optevo::surrogate::Stage::Completed => "completed",
    };
    Ok((r.best_val_acc, r.best_lr, stage.to_string(), r.steps_run))
}

#[pymodule]
#[pyo3(name = "optevo")]
fn optevo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    m.add_function(wrap_pyfunction!(export, m)?)?;
    m.add_function(wrap_pyfunction!(pretty_print, m)?)?;
    m.add_function(wrap_pyfunction!(sphere_check, m)?)?;
    m.add_function(wrap_pyfunction!(eval_trace, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(random_genome, m)?)?;
    m.add_function(wrap_pyfunction!(mutate, m)?)?;
    m.add_function(wrap_pyfunction!(fitness, m)?)?;
    Ok(())
}
