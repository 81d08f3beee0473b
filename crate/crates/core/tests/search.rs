mod common;

use optevo::search::{eliminate, replay, run_search, EliminationStage, SearchConfig};
use optevo::surrogate::{make_dataset, DataConfig, FitnessConfig};

fn small() -> SearchConfig {
    let mut cfg = SearchConfig { n: 2, k: 2, t: 2, seed: 3, init_factor: 2, ..Default::default() };
    cfg.fitness = cfg.fitness.scaled(0.05);
    cfg
}

#[test]
fn cli_search_is_deterministic_and_resumable() {
    println!("{}", common::search_determinism(&["--budget-scale", "0.05"]).unwrap());
}

#[test]
fn history_replays_to_final_particles() {
    let run = run_search(&small(), 2).unwrap();
    assert_eq!(run.history.len(), 2);
    assert_eq!(replay(&run.initial, &run.history), run.particles);
    assert_eq!(run, run_search(&small(), 1).unwrap());
}

#[test]
fn elimination_keeps_requested_counts() {
    let data = make_dataset(&DataConfig::default()).unwrap();
    let genomes: Vec<_> =
        ["SGD", "Adam", "QHM"].iter().map(|n| optevo::catalog::build(n).unwrap().genome).collect();
    let stages = [
        EliminationStage { keep: 2, base: 8, budget_scale: 0.05, repeats: 1 },
        EliminationStage { keep: 1, base: 8, budget_scale: 0.05, repeats: 2 },
    ];
    let res = eliminate(&genomes, &stages, &data, &FitnessConfig::default(), 0, 2).unwrap();
    assert_eq!(res.ranking.len(), 3);
    assert_eq!(res.survivors().count(), 1);
    assert_eq!(res.ranking[0].stage_means.len(), 2);
    assert_eq!(res.ranking[2].eliminated_at, Some(0));
    let bad = [EliminationStage { keep: 4, ..stages[0] }, stages[0]];
    assert!(eliminate(&genomes, &bad, &data, &FitnessConfig::default(), 0, 1).is_err());
}
