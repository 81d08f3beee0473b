use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use optevo::engine::{apply_step, init_state};
use optevo::integrity::decay_range_check;
use optevo::mutation::{mutate_with, random_init, InitConfig, MutationMask};
use optevo::ops::Op;
use optevo::schedules::Clock;
use optevo::{deserialize, serialize, OptimizerGenome};

fn genome(seed: u64) -> OptimizerGenome {
    random_init(&mut ChaCha8Rng::seed_from_u64(seed), &InitConfig::default()).unwrap()
}

fn has_active_drop(g: &OptimizerGenome) -> bool {
    g.graph
        .resolve_active()
        .into_iter()
        .any(|r| matches!(g.graph.node(r).op, Op::Unary(u) if u.drop_probability().is_some()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mutation_stays_valid(seed in any::<u64>(), steps in 1usize..8, decay_only in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mask = if decay_only { MutationMask::DecayOnly } else { MutationMask::Full };
        let mut g = genome(seed);
        for _ in 0..steps {
            let child = mutate_with(&g, &mut rng, mask, &InitConfig::default());
            prop_assert!(child.validate().is_ok());
            prop_assert_ne!(&child.uid, &g.uid);
            for (_, _, dg) in child.graph.decays() {
                prop_assert!(decay_range_check(dg, 1000));
            }
            if decay_only {
                prop_assert_eq!(child.momentum, g.momentum);
                for (a, b) in child.graph.node_refs().zip(g.graph.node_refs()) {
                    prop_assert_eq!(child.graph.node(a).op, g.graph.node(b).op);
                }
            }
            prop_assert_eq!(deserialize(&serialize(&child)).unwrap(), child.clone());
            g = child;
        }
    }

    #[test]
    fn pruning_leaves_updates_unchanged(seed in any::<u64>()) {
        let g = genome(seed);
        prop_assume!(!has_active_drop(&g));
        let pruned = OptimizerGenome { graph: g.graph.without_inactive(), ..g.clone() };
        prop_assert!(pruned.validate().is_ok());
        let n = 5;
        let mut wa = vec![0.3, -0.2, 1.0, 0.0, -1.5];
        let mut wb = wa.clone();
        let mut sa = init_state(&g, n, 1);
        let mut sb = init_state(&pruned, n, 1);
        for t in 0..20u64 {
            let grad: Vec<f64> = wa.iter().map(|w| 2.0 * (w - 0.7) + 0.01 * t as f64).collect();
            let clock = Clock::new(t, 20);
            apply_step(&g, &mut sa, &mut wa, &grad, 0.01, clock);
            apply_step(&pruned, &mut sb, &mut wb, &grad, 0.01, clock);
            for (a, b) in wa.iter().zip(&wb) {
                prop_assert!(a == b || (a.is_nan() && b.is_nan()), "step {}: {} vs {}", t, a, b);
            }
        }
    }
}

#[test]
fn init_decay_fraction_is_near_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = InitConfig::default();
    let (mut decayed, mut edges) = (0usize, 0usize);
    for _ in 0..2000 {
        let g = random_init(&mut rng, &cfg).unwrap();
        decayed += g.graph.decays().len();
        edges += g.graph.edge_count();
    }
    let frac = decayed as f64 / edges as f64;
    assert!((0.17..=0.23).contains(&frac), "decay fraction {frac}");
}
