use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SearchConfig, PHASE_GA, PHASE_INIT};
use crate::graph::OptimizerGenome;
use crate::integrity::genome_passes;
use crate::mutation::{mutate_with, random_init};
use crate::seed::derive_seed;
use crate::surrogate::{fitness, fitness_after_sweep, lr_sweep, make_dataset, Dataset, FitnessRecord};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    #[serde(with = "crate::format::genome_serde")]
    pub genome: OptimizerGenome,
    pub fitness: FitnessRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitRecord {
    pub index: usize,
    pub seed: u64,
    pub attempts: usize,
    #[serde(with = "crate::format::genome_serde")]
    pub genome: OptimizerGenome,
    pub fitness: FitnessRecord,
}

/// One child slot of one particle at one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildRecord {
    pub particle: usize,
    pub timestep: usize,
    pub child: usize,
    pub seed: u64,
    /// Mutations drawn for this slot, including rejected ones.
    pub attempts: usize,
    /// `None` when every attempt was rejected and the slot was skipped.
    #[serde(with = "crate::format::opt_genome_serde")]
    pub genome: Option<OptimizerGenome>,
    pub fitness: Option<FitnessRecord>,
    pub selected: bool,
}

impl ChildRecord {
    pub fn skipped(&self) -> bool {
        self.genome.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub children: Vec<ChildRecord>,
    /// Index of the selected child, `None` when every slot was skipped.
    pub selected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub next_timestep: usize,
    pub initial: Vec<Particle>,
    pub particles: Vec<Particle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRun {
    pub config: SearchConfig,
    pub init: Vec<InitRecord>,
    pub initial: Vec<Particle>,
    pub particles: Vec<Particle>,
    /// Children per timestep, ordered by (particle, child).
    pub history: Vec<Vec<ChildRecord>>,
}

impl SearchRun {
    /// Particle indices sorted by fitness, best first; ties keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.particles.len()).collect();
        idx.sort_by(|&a, &b| {
            let (fa, fb) = (self.particles[a].fitness.best_val_acc, self.particles[b].fitness.best_val_acc);
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        idx
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, Error> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Draws `init_factor * n` integrity-passing genomes, scores them at a
/// reduced budget and keeps the best `n` (ties by draw index). With a seed
/// genome configured, every particle starts from that catalog entry instead.
pub fn enlarged_init(cfg: &SearchConfig, data: &Dataset, jobs: usize) -> Result<(Vec<Particle>, Vec<InitRecord>), Error> {
    cfg.validate()?;
    if let Some(name) = &cfg.seed_genome {
        let genome = crate::catalog::build(name)?.genome;
        let fit = fitness(&genome, data, &cfg.fitness);
        return Ok((vec![Particle { genome, fitness: fit }; cfg.n], Vec::new()));
    }
    let reduced = cfg.fitness.scaled(cfg.init_budget_scale);
    let total = cfg.n * cfg.init_factor;
    let records: Vec<InitRecord> = pool(jobs)?.install(|| {
        (0..total)
            .into_par_iter()
            .map(|index| {
                let seed = derive_seed(cfg.seed, &[PHASE_INIT, index as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for attempt in 1..=cfg.init_attempts {
                    let Ok(genome) = random_init(&mut rng, &cfg.init) else { continue };
                    if genome_passes(&genome, &cfg.sphere, cfg.init.decay_grid) {
                        let fit = fitness(&genome, data, &reduced);
                        return Ok(InitRecord { index, seed, attempts: attempt, genome, fitness: fit });
                    }
                }
                Err(Error::Config(format!(
                    "initialization candidate {index} found no integrity-passing genome in {} attempts",
                    cfg.init_attempts
                )))
            })
            .collect::<Result<Vec<_>, Error>>()
    })?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[b].fitness.best_val_acc.total_cmp(&records[a].fitness.best_val_acc).then(a.cmp(&b)));
    let particles = order
        .iter()
        .take(cfg.n)
        .map(|&i| Particle { genome: records[i].genome.clone(), fitness: records[i].fitness.clone() })
        .collect();
    Ok((particles, records))
}

/// Fills one child slot: mutate the parent until the child passes the
/// integrity gates and the learning-rate sweep, then score it.
fn evaluate_child(
    particle: usize,
    timestep: usize,
    child: usize,
    parent: &OptimizerGenome,
    cfg: &SearchConfig,
    data: &Dataset,
) -> ChildRecord {
    let seed = derive_seed(cfg.seed, &[PHASE_GA, particle as u64, timestep as u64, child as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = ChildRecord { particle, timestep, child, seed, attempts: 0, genome: None, fitness: None, selected: false };
    for attempt in 1..=cfg.child_attempts {
        rec.attempts = attempt;
        let genome = mutate_with(parent, &mut rng, cfg.mask, &cfg.init);
        if !genome_passes(&genome, &cfg.sphere, cfg.init.decay_grid) {
            continue;
        }
        let sweep = lr_sweep(&genome, data, &cfg.fitness);
        if !sweep.passed() {
            continue;
        }
        rec.fitness = Some(fitness_after_sweep(&genome, data, &cfg.fitness, &sweep));
        rec.genome = Some(genome);
        break;
    }
    rec
}

/// Argmax of child fitness over evaluated slots; the lowest index wins ties.
fn select(children: &[ChildRecord]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in children.iter().enumerate() {
        if let Some(f) = &c.fitness {
            if best.map_or(true, |(_, b)| f.best_val_acc > b) {
                best = Some((i, f.best_val_acc));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn finish_step(mut children: Vec<ChildRecord>) -> StepOutcome {
    let selected = select(&children);
    if let Some(i) = selected {
        children[i].selected = true;
    }
    StepOutcome { children, selected }
}

/// One timestep for one particle. The parent is never a candidate.
pub fn ga_step(particle: usize, timestep: usize, parent: &Particle, cfg: &SearchConfig, data: &Dataset) -> StepOutcome {
    let children = (0..cfg.k).map(|c| evaluate_child(particle, timestep, c, &parent.genome, cfg, data)).collect();
    finish_step(children)
}

fn advance(particles: &[Particle], outcomes: &[StepOutcome]) -> Vec<Particle> {
    particles
        .iter()
        .zip(outcomes)
        .map(|(p, o)| match o.selected {
            Some(i) => {
                let c = &o.children[i];
                Particle {
                    genome: c.genome.clone().expect("selected child was evaluated"),
                    fitness: c.fitness.clone().expect("selected child was evaluated"),
                }
            }
            None => p.clone(),
        })
        .collect()
}

/// Re-applies the selection rule to recorded history.
pub fn replay(initial: &[Particle], history: &[Vec<ChildRecord>]) -> Vec<Particle> {
    let mut particles = initial.to_vec();
    for step in history {
        let outcomes: Vec<StepOutcome> = (0..particles.len())
            .map(|p| {
                let children: Vec<ChildRecord> = step.iter().filter(|c| c.particle == p).cloned().collect();
                StepOutcome { selected: select(&children), children }
            })
            .collect();
        particles = advance(&particles, &outcomes);
    }
    particles
}

fn timestep(particles: &[Particle], ts: usize, cfg: &SearchConfig, data: &Dataset, jobs: usize) -> Result<Vec<StepOutcome>, Error> {
    let pairs: Vec<(usize, usize)> = (0..particles.len()).flat_map(|p| (0..cfg.k).map(move |c| (p, c))).collect();
    let mut records: Vec<ChildRecord> = pool(jobs)?.install(|| {
        pairs
            .par_iter()
            .map(|&(p, c)| evaluate_child(p, ts, c, &particles[p].genome, cfg, data))
            .collect()
    });
    let mut outcomes = Vec::with_capacity(particles.len());
    for _ in 0..particles.len() {
        let rest = records.split_off(cfg.k);
        outcomes.push(finish_step(records));
        records = rest;
    }
    Ok(outcomes)
}

/// Runs the whole search in memory, without a run directory.
pub fn run_search(cfg: &SearchConfig, jobs: usize) -> Result<SearchRun, Error> {
    cfg.validate()?;
    let data = make_dataset(&cfg.data)?;
    let (initial, init) = enlarged_init(cfg, &data, jobs)?;
    let mut particles = initial.clone();
    let mut history = Vec::with_capacity(cfg.t);
    for ts in 0..cfg.t {
        let outcomes = timestep(&particles, ts, cfg, &data, jobs)?;
        particles = advance(&particles, &outcomes);
        history.push(outcomes.into_iter().flat_map(|o| o.children).collect());
    }
    Ok(SearchRun { config: cfg.clone(), init, initial, particles, history })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), Error> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, Error> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn step_file(dir: &Path, ts: usize) -> PathBuf {
    dir.join("history").join(format!("step_{ts:03}.jsonl"))
}

/// Reads every completed timestep's history from a run directory.
pub fn read_history(dir: &Path) -> Result<Vec<Vec<ChildRecord>>, Error> {
    let mut out = Vec::new();
    for ts in 0.. {
        let p = step_file(dir, ts);
        if !p.exists() {
            break;
        }
        out.push(read_jsonl(&p)?);
    }
    Ok(out)
}

fn write_ranking(dir: &Path, run: &SearchRun) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "particle", "uid", "best_val_acc", "best_lr", "stage_reached", "steps_run", "genome"])
        .map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
    for (rank, &i) in run.ranking().iter().enumerate() {
        let p = &run.particles[i];
        let stage = serde_json::to_value(p.fitness.stage_reached)?;
        w.write_record([
            (rank + 1).to_string(),
            i.to_string(),
            p.genome.uid.clone(),
            p.fitness.best_val_acc.to_string(),
            p.fitness.best_lr.to_string(),
            stage.as_str().unwrap_or_default().to_string(),
            p.fitness.steps_run.to_string(),
            crate::format::serialize(&p.genome),
        ])
        .map_err(|e| Error::Csv { line: rank as u64 + 2, msg: e.to_string() })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    write_atomic(&dir.join("ranking.csv"), &bytes)
}

fn write_manifest(dir: &Path, command: &str, config_path: Option<&Path>, seed: u64) -> Result<(), Error> {
    let mut artifacts = vec!["config.json".to_string(), "checkpoint.json".to_string(), "history/".to_string()];
    if dir.join("ranking.csv").exists() {
        artifacts.push("ranking.csv".into());
    }
    let m = RunManifest {
        command: command.to_string(),
        config_path: config_path.map(Path::to_path_buf),
        seed,
        artifacts,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&m)?.as_bytes())
}

fn drive(
    dir: &Path,
    cfg: &SearchConfig,
    data: &Dataset,
    mut ck: Checkpoint,
    jobs: usize,
    stop_after: Option<usize>,
) -> Result<SearchRun, Error> {
    let mut done = 0;
    while ck.next_timestep < cfg.t {
        if stop_after.is_some_and(|s| done >= s) {
            break;
        }
        write_atomic(&dir.join("checkpoint.json"), serde_json::to_string(&ck)?.as_bytes())?;
        let ts = ck.next_timestep;
        let outcomes = timestep(&ck.particles, ts, cfg, data, jobs)?;
        let children: Vec<ChildRecord> = outcomes.iter().flat_map(|o| o.children.clone()).collect();
        write_jsonl(&step_file(dir, ts), &children)?;
        ck.particles = advance(&ck.particles, &outcomes);
        ck.next_timestep += 1;
        done += 1;
    }
    write_atomic(&dir.join("checkpoint.json"), serde_json::to_string(&ck)?.as_bytes())?;
    let init_path = dir.join("history").join("init.jsonl");
    let init = if init_path.exists() { read_jsonl(&init_path)? } else { Vec::new() };
    let run = SearchRun {
        config: cfg.clone(),
        init,
        initial: ck.initial.clone(),
        particles: ck.particles.clone(),
        history: read_history(dir)?,
    };
    if ck.next_timestep >= cfg.t {
        write_ranking(dir, &run)?;
    }
    Ok(run)
}

/// Runs a search into `dir`, which must be missing or empty. With
/// `stop_after`, at most that many timesteps run before returning (the run
/// can be continued with [`resume_search`]).
pub fn run_search_in(
    dir: &Path,
    cfg: &SearchConfig,
    jobs: usize,
    stop_after: Option<usize>,
    config_path: Option<&Path>,
) -> Result<SearchRun, Error> {
    cfg.validate()?;
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        return Err(Error::RunDirNotEmpty(dir.display().to_string()));
    }
    fs::create_dir_all(dir.join("history"))?;
    write_atomic(&dir.join("config.json"), serde_json::to_string_pretty(cfg)?.as_bytes())?;
    write_manifest(dir, "search run", config_path, cfg.seed)?;
    let data = make_dataset(&cfg.data)?;
    let (initial, init) = enlarged_init(cfg, &data, jobs)?;
    write_jsonl(&dir.join("history").join("init.jsonl"), &init)?;
    let ck = Checkpoint { next_timestep: 0, particles: initial.clone(), initial };
    let run = drive(dir, cfg, &data, ck, jobs, stop_after)?;
    write_manifest(dir, "search run", config_path, cfg.seed)?;
    Ok(run)
}

/// Continues a run directory from its checkpoint.
pub fn resume_search(dir: &Path, jobs: usize) -> Result<SearchRun, Error> {
    let cfg: SearchConfig = serde_json::from_str(&fs::read_to_string(dir.join("config.json"))?)?;
    cfg.validate()?;
    let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(dir.join("checkpoint.json"))?)?;
    let data = make_dataset(&cfg.data)?;
    let run = drive(dir, &cfg, &data, ck, jobs, None)?;
    write_manifest(dir, "search resume", None, cfg.seed)?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::Stage;

    fn rec(i: usize, acc: Option<f64>) -> ChildRecord {
        ChildRecord {
            particle: 0,
            timestep: 0,
            child: i,
            seed: 0,
            attempts: 1,
            genome: acc.map(|_| crate::catalog::build("SGD").unwrap().genome),
            fitness: acc.map(|a| FitnessRecord { best_val_acc: a, best_lr: 0.1, stage_reached: Stage::Completed, steps_run: 1 }),
            selected: false,
        }
    }

    #[test]
    fn selection_is_argmax_with_low_index_ties() {
        assert_eq!(select(&[rec(0, Some(0.6)), rec(1, Some(0.7)), rec(2, Some(0.5))]), Some(1));
        assert_eq!(select(&[rec(0, Some(0.7)), rec(1, Some(0.7))]), Some(0));
        assert_eq!(select(&[rec(0, None), rec(1, Some(0.1))]), Some(1));
        assert_eq!(select(&[rec(0, None), rec(1, None)]), None);
    }
}
