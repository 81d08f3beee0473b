use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PHASE_ELIMINATE;
use crate::graph::OptimizerGenome;
use crate::seed::derive_seed;
use crate::surrogate::{fitness, Dataset, FitnessConfig, FitnessRecord};
use crate::Error;

/// One elimination round: evaluate each survivor `repeats` times with a
/// classifier of width `base` and budgets scaled by `budget_scale`, then
/// keep the best `keep` by mean fitness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EliminationStage {
    pub keep: usize,
    pub base: usize,
    pub budget_scale: f64,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGenome {
    #[serde(with = "crate::format::genome_serde")]
    pub genome: OptimizerGenome,
    /// Mean fitness per stage the genome took part in.
    pub stage_means: Vec<f64>,
    /// Every individual record, grouped by stage.
    pub records: Vec<Vec<FitnessRecord>>,
    /// Stage at which the genome was cut; `None` for survivors.
    pub eliminated_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationResult {
    /// Survivors first (best first), then eliminated genomes, later cuts first.
    pub ranking: Vec<RankedGenome>,
}

impl EliminationResult {
    pub fn survivors(&self) -> impl Iterator<Item = &RankedGenome> {
        self.ranking.iter().filter(|r| r.eliminated_at.is_none())
    }
}

pub(crate) fn validate_stages(stages: &[EliminationStage], population: Option<usize>) -> Result<(), Error> {
    let mut prev = population.map(|p| p + 1);
    for (i, s) in stages.iter().enumerate() {
        if s.keep == 0 || s.repeats == 0 || s.base == 0 || !(s.budget_scale > 0.0) {
            return Err(Error::Config(format!("stage {i}: keep, repeats, base and budget_scale must be positive")));
        }
        if let Some(p) = prev {
            if s.keep >= p {
                return Err(Error::Config(format!("stage {i}: cuts must be strictly decreasing and at most the population")));
            }
        }
        prev = Some(s.keep);
    }
    Ok(())
}

/// Staged re-evaluation with progressively larger budgets.
pub fn eliminate(
    genomes: &[OptimizerGenome],
    stages: &[EliminationStage],
    data: &Dataset,
    base_cfg: &FitnessConfig,
    seed: u64,
    jobs: usize,
) -> Result<EliminationResult, Error> {
    validate_stages(stages, Some(genomes.len()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut entries: Vec<RankedGenome> = genomes
        .iter()
        .map(|g| RankedGenome { genome: g.clone(), stage_means: Vec::new(), records: Vec::new(), eliminated_at: None })
        .collect();
    let mut alive: Vec<usize> = (0..genomes.len()).collect();
    let mut cut_order: Vec<usize> = Vec::new();
    for (si, stage) in stages.iter().enumerate() {
        let cfgs: Vec<FitnessConfig> = (0..stage.repeats)
            .map(|r| {
                let s = derive_seed(seed, &[PHASE_ELIMINATE, si as u64, r as u64]);
                let mut c = base_cfg.scaled(stage.budget_scale);
                c.classifier.base = stage.base;
                c.classifier.seed = s;
                c.seed = s;
                c
            })
            .collect();
        let jobs_list: Vec<(usize, usize)> = alive.iter().flat_map(|&g| (0..stage.repeats).map(move |r| (g, r))).collect();
        let recs: Vec<FitnessRecord> =
            pool.install(|| jobs_list.par_iter().map(|&(g, r)| fitness(&genomes[g], data, &cfgs[r])).collect());
        for (chunk, &g) in recs.chunks(stage.repeats).zip(&alive) {
            let mean = chunk.iter().map(|r| r.best_val_acc).sum::<f64>() / chunk.len() as f64;
            entries[g].stage_means.push(mean);
            entries[g].records.push(chunk.to_vec());
        }
        alive.sort_by(|&a, &b| entries[b].stage_means[si].total_cmp(&entries[a].stage_means[si]).then(a.cmp(&b)));
        for &g in &alive[stage.keep..] {
            entries[g].eliminated_at = Some(si);
        }
        let dropped: Vec<usize> = alive.split_off(stage.keep);
        cut_order.splice(0..0, dropped);
    }
    let order: Vec<usize> = alive.into_iter().chain(cut_order).collect();
    Ok(EliminationResult { ranking: order.into_iter().map(|i| entries[i].clone()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(keep: usize) -> EliminationStage {
        EliminationStage { keep, base: 4, budget_scale: 1.0, repeats: 1 }
    }

    #[test]
    fn stage_validation() {
        assert!(validate_stages(&[st(4), st(2)], Some(8)).is_ok());
        assert!(validate_stages(&[st(8)], Some(8)).is_ok());
        assert!(validate_stages(&[st(9)], Some(8)).is_err());
        assert!(validate_stages(&[st(4), st(4)], Some(8)).is_err());
        assert!(validate_stages(&[EliminationStage { repeats: 0, ..st(1) }], None).is_err());
    }
}
