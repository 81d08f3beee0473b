//! Checks shared by the acceptance target and the per-area integration tests.
//! Each returns `Ok(summary)` or `Err(reason)`.
#![allow(dead_code)]

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use optevo::catalog;
use optevo::engine::{apply_step, compute_update, init_state, momentum_beta};
use optevo::integrity::{sphere_check, SphereConfig};
use optevo::mutation::{random_init, InitConfig};
use optevo::plot::{self, Axis, SurfaceSpec};
use optevo::schedules::{Clock, OneCycle, ScheduleId, LR_SCHEDULES, SCHEDULES};
use optevo::search::{run_search, SearchConfig};
use optevo::surrogate::{fitness, make_dataset, ClassifierSpec, DataConfig, FitnessConfig, Mlp, Stage};
use optevo::{deserialize, serialize, Momentum, OptimizerGenome};

pub type Check = Result<String, String>;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_optevo")
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Genome whose output node is `op(leaf)`; hidden nodes are unused padding.
pub fn fixture(uid: &str, op: &str, leaf: &str) -> OptimizerGenome {
    let node = format!(r#"{{"op":"{op}","inputs":["{leaf}"],"decays":[null]}}"#);
    let hidden: Vec<String> = (0..4)
        .map(|i| format!(r#"{{"id":{i},"op":"identity","inputs":["g"],"decays":[null]}}"#))
        .collect();
    let text = format!(
        r#"{{"uid":"{uid}","momentum":"none","lineage":null,"nodes":[{}],"output":{node}}}"#,
        hidden.join(",")
    );
    deserialize(&text).expect("fixture genome parses")
}

pub fn u_one() -> OptimizerGenome {
    fixture("U_one", "identity", "one")
}

pub fn u_neg_g() -> OptimizerGenome {
    fixture("U_neg_g", "neg", "g")
}

// ---------------------------------------------------------------------------

/// Independent EMA bookkeeping for the trace comparison.
struct RefEmas {
    v: Vec<f64>,
    s: Vec<f64>,
    l: Vec<f64>,
}

pub fn catalog_oracles(draws: usize, trace_steps: u64) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let entries = catalog::all();
    for e in &entries {
        // Randomized single-step inputs.
        for d in 0..draws {
            let n = 3;
            let total = rng.gen_range(1..=100_000u64);
            let clock = Clock::new(rng.gen_range(0..=total), total);
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut st = init_state(&e.genome, n, d as u64);
            for i in 0..n {
                st.v_hat[i] = rng.gen_range(-3.0..3.0);
                st.s_hat[i] = rng.gen_range(0.0..5.0);
                st.lambda_hat[i] = rng.gen_range(-5.0..5.0);
            }
            let want = e.oracle(&g, &w, &st, clock);
            let (got, _) = compute_update(&e.genome, &mut st, &g, &w, clock);
            for (a, b) in got.iter().zip(&want) {
                let r = rel_err(*a, *b);
                worst = worst.max(r);
                if !(r <= 1e-9) {
                    return Err(format!("{}: draw {d} got {a} want {b}", e.name));
                }
            }
        }
        // Multi-step trace: engine weights vs oracle-driven weights.
        let n = 4;
        let mut w_eng: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut w_ref = w_eng.clone();
        let mut st = init_state(&e.genome, n, 0);
        let mut ref_emas = RefEmas { v: vec![0.0; n], s: vec![0.0; n], l: vec![0.0; n] };
        let mut z = vec![0.0; n];
        let lr = 0.01;
        for t in 0..trace_steps {
            let clock = Clock::new(t, trace_steps);
            let g: Vec<f64> = w_ref.iter().map(|x| 2.0 * (x - 0.5) + rng.gen_range(-0.1..0.1)).collect();
            for i in 0..n {
                ref_emas.v[i] = 0.9 * ref_emas.v[i] + 0.1 * g[i];
                ref_emas.s[i] = 0.99 * ref_emas.s[i] + 0.01 * g[i] * g[i];
                ref_emas.l[i] = 0.999 * ref_emas.l[i] + 0.001 * g[i] * g[i] * g[i];
            }
            apply_step(&e.genome, &mut st, &mut w_eng, &g, lr, clock);
            let mut view = st.clone();
            view.v_hat = ref_emas.v.clone();
            view.s_hat = ref_emas.s.clone();
            view.lambda_hat = ref_emas.l.clone();
            let u = e.oracle(&g, &w_ref, &view, clock);
            let beta = 0.90 + 0.05 * (2.0 * std::f64::consts::PI * t as f64 / trace_steps as f64).cos();
            debug_assert!((beta - momentum_beta(clock)).abs() < 1e-15);
            for i in 0..n {
                match e.genome.momentum {
                    Momentum::None => w_ref[i] -= lr * u[i],
                    Momentum::Momentum => {
                        z[i] = beta * z[i] - lr * u[i];
                        w_ref[i] += z[i];
                    }
                    Momentum::Nesterov => {
                        z[i] = beta * z[i] - lr * u[i];
                        w_ref[i] += beta * z[i] - lr * u[i];
                    }
                }
            }
            for (a, b) in w_eng.iter().zip(&w_ref) {
                let r = rel_err(*a, *b);
                worst = worst.max(r);
                if !(r <= 1e-9) {
                    return Err(format!("{}: trace step {t} got {a} want {b}", e.name));
                }
            }
        }
    }
    let el = start.elapsed();
    if el > Duration::from_secs(30) {
        return Err(format!("took {el:?}, limit 30 s"));
    }
    Ok(format!("{} entries, worst rel err {worst:.2e}, {el:.1?}", entries.len()))
}

// ---------------------------------------------------------------------------

fn complement(s: ScheduleId) -> Option<(ScheduleId, f64)> {
    use ScheduleId::*;
    Some(match s {
        Ld => (Li, 1.0),
        Ldr => (Lir, 1.0),
        Cd => (Ci, 1.0),
        Cdr => (Cir, 1.0),
        Ccd => (Cci, 1.0),
        Ed => (Ei, 1.0),
        Dd => (Di, 0.95),
        _ => return None,
    })
}

pub fn schedules() -> Check {
    use ScheduleId::*;
    let total = 10_000u64;
    let at = |s: ScheduleId, t: u64| s.eval(Clock::new(t, total));
    for s in SCHEDULES {
        for t in 0..=total {
            let v = at(s, t);
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{s}({t}) = {v} outside [0, 1]"));
            }
        }
        if let Some((c, sum)) = complement(s) {
            for t in 0..=total {
                let d = at(s, t) + at(c, t) - sum;
                if d.abs() > 1e-12 {
                    return Err(format!("{s} + {c} at t={t} off by {d}"));
                }
            }
        }
    }
    // Restart variants repeat every T/2; the cyclic pair is mirror-symmetric.
    for s in [Ldr, Lir, Cdr, Cir] {
        for t in 0..total / 2 {
            let d = at(s, t) - at(s, t + total / 2);
            if d.abs() > 1e-12 {
                return Err(format!("{s} not periodic at t={t}: {d}"));
            }
        }
    }
    for s in [Ccd, Cci] {
        for t in 0..=total {
            let d = at(s, t) - at(s, total - t);
            if d.abs() > 1e-12 {
                return Err(format!("{s} not symmetric at t={t}: {d}"));
            }
        }
    }
    let spots = [
        (Ld, 0, 1.0),
        (Cd, total / 2, 0.5),
        (Dd, 0, 0.95),
        (Ei, total, 0.99),
    ];
    for (s, t, want) in spots {
        let v = at(s, t);
        if (v - want).abs() > 1e-12 {
            return Err(format!("{s}({t}) = {v}, want {want}"));
        }
    }
    Ok("14 schedules on 10,001 points".into())
}

// ---------------------------------------------------------------------------

pub fn integrity() -> Check {
    let cfg = SphereConfig::default();
    let mut names = vec!["SGD", "Adam", "RMSProp", "Nesterov", "QHM"];
    names.extend(catalog::OPTIMIZERS);
    for name in names {
        let g = catalog::build(name).map_err(|e| e.to_string())?.genome;
        let a = sphere_check(&g, &cfg);
        if !a.passed {
            return Err(format!("{name} failed: best loss {} of {}", a.best_final_loss, a.initial_loss));
        }
        if sphere_check(&g, &cfg) != a {
            return Err(format!("{name} verdict not deterministic"));
        }
    }
    for g in [u_one(), u_neg_g()] {
        let v = sphere_check(&g, &cfg);
        if v.passed {
            return Err(format!("{} passed but should fail", g.uid));
        }
        if sphere_check(&g, &cfg) != v {
            return Err(format!("{} verdict not deterministic", g.uid));
        }
    }
    Ok("15 optimizers pass, 2 fixtures fail".into())
}

// ---------------------------------------------------------------------------

pub fn gradient_check(coords: usize) -> Check {
    let data = make_dataset(&DataConfig::default()).map_err(|e| e.to_string())?;
    let spec = ClassifierSpec { seed: 3, ..Default::default() };
    let mut net = Mlp::new(&spec, data.train.dim, data.classes);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for b in net.params.iter_mut().skip(1).step_by(2) {
        b.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    }
    let rows: Vec<usize> = (0..32).collect();
    let (x, y) = (&data.train.x, &data.train.y);
    let analytic = net.forward_backward(x, y, &rows).grads;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let t = rng.gen_range(0..net.params.len());
        let i = rng.gen_range(0..net.params[t].len());
        let base = net.params[t][i];
        net.params[t][i] = base + h;
        let up = net.loss(x, y, &rows);
        net.params[t][i] = base - h;
        let down = net.loss(x, y, &rows);
        net.params[t][i] = base;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[t][i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
        if err >= 1e-5 {
            return Err(format!("tensor {t} index {i}: analytic {a} numeric {numeric}"));
        }
    }
    Ok(format!("{coords} coordinates, worst rel err {worst:.2e}"))
}

// ---------------------------------------------------------------------------

pub fn early_stopping() -> Check {
    let start = Instant::now();
    let data = make_dataset(&DataConfig::default()).map_err(|e| e.to_string())?;
    let cfg = FitnessConfig::default();
    let adam = fitness(&catalog::build("Adam").unwrap().genome, &data, &cfg);
    if adam.stage_reached != Stage::Completed {
        return Err(format!("Adam: {adam:?}"));
    }
    let one = fitness(&u_one(), &data, &cfg);
    if one.stage_reached != Stage::LrSweepFailed {
        return Err(format!("U=1: {one:?}"));
    }
    // Gradient ascent at a fixed learning rate walks away from the optimum.
    let forced = FitnessConfig { forced_lr: Some(0.1), ..cfg.clone() };
    let div = fitness(&u_neg_g(), &data, &forced);
    if div.stage_reached != Stage::Aborted {
        return Err(format!("U=-g at lr 0.1: {div:?}"));
    }
    let el = start.elapsed();
    if el > Duration::from_secs(120) {
        return Err(format!("took {el:?}, limit 2 min"));
    }
    Ok(format!(
        "Adam completed ({:.3}), U=1 sweep failed, U=-g@0.1 aborted at step {}; {el:.1?}",
        adam.best_val_acc, div.steps_run
    ))
}

// ---------------------------------------------------------------------------

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("`optevo {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

/// `search run` with jobs 1 and 4 plus an interrupted-then-resumed run.
/// `extra` is appended to every run command (e.g. a budget scale).
pub fn search_determinism(extra: &[&str]) -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = |s: &str| tmp.path().join(s);
    let base = ["search", "run", "--n", "2", "--k", "3", "--t", "2", "--seed", "0"];
    let run = |name: &str, more: &[&str]| {
        let out = dir(name);
        let out = out.to_str().unwrap().to_string();
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--out", &out]);
        args.extend(more);
        args.extend(extra);
        cli(&args)
    };
    run("j1", &["--jobs", "1"])?;
    run("j4", &["--jobs", "4"])?;
    run("resumed", &["--jobs", "1", "--stop-after", "1"])?;
    if dir("resumed").join("ranking.csv").exists() {
        return Err("interrupted run already wrote a ranking".into());
    }
    let resumed = dir("resumed");
    cli(&["search", "resume", resumed.to_str().unwrap(), "--seed", "0", "--jobs", "2"])?;
    let r1 = read(&dir("j1").join("ranking.csv"))?;
    if r1 != read(&dir("j4").join("ranking.csv"))? {
        return Err("ranking.csv differs between --jobs 1 and --jobs 4".into());
    }
    if r1 != read(&dir("resumed").join("ranking.csv"))? {
        return Err("resumed ranking.csv differs from the uninterrupted run".into());
    }
    for f in ["history/step_000.jsonl", "history/step_001.jsonl", "history/init.jsonl", "checkpoint.json"] {
        if read(&dir("j1").join(f))? != read(&dir("resumed").join(f))? {
            return Err(format!("{f} differs after resume"));
        }
    }
    Ok(format!("rankings byte-identical across jobs and resume; {:.1?}", start.elapsed()))
}

// ---------------------------------------------------------------------------

pub fn ga_efficacy(budget_scale: f64) -> Check {
    let start = Instant::now();
    let mut cfg = SearchConfig { n: 4, k: 4, t: 3, seed: 0, ..Default::default() };
    cfg.fitness = cfg.fitness.scaled(budget_scale);
    let run = run_search(&cfg, 1).map_err(|e| e.to_string())?;
    let best = run.particles.iter().map(|p| p.fitness.best_val_acc).fold(f64::NEG_INFINITY, f64::max);
    let data = make_dataset(&cfg.data).map_err(|e| e.to_string())?;
    let sgd = fitness(&catalog::build("SGD").unwrap().genome, &data, &cfg.fitness);
    let summary = format!("best particle {best:.3} vs SGD {:.3}; {:.1?}", sgd.best_val_acc, start.elapsed());
    if best >= sgd.best_val_acc {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------------------

pub fn serialization(count: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let init = InitConfig { p_decay: 0.5, ..Default::default() };
    for i in 0..count {
        let mut g = random_init(&mut rng, &init).map_err(|e| e.to_string())?;
        g.momentum = optevo::graph::MOMENTA[i % 3];
        let text = serialize(&g);
        let back = deserialize(&text).map_err(|e| format!("genome {i}: {e}"))?;
        if back != g || serialize(&back) != text {
            return Err(format!("genome {i} did not round-trip"));
        }
    }
    for e in catalog::all() {
        let text = serialize(&e.genome);
        if deserialize(&text).map_err(|er| format!("{}: {er}", e.name))? != e.genome {
            return Err(format!("{} did not round-trip", e.name));
        }
    }
    Ok(format!("{count} random genomes and 30 catalog entries"))
}

// ---------------------------------------------------------------------------

pub fn plots() -> Check {
    let total = 96_000;
    let table = plot::lr_table(total, &OneCycle::default(), false).map_err(|e| e.to_string())?;
    for s in LR_SCHEDULES {
        let col = table.column(s.name()).ok_or(format!("missing column {}", s.name()))?;
        if col[0] != 0.0 || col[total as usize] != 0.0 {
            return Err(format!("{} is {} at t=0 and {} at t=T", s.name(), col[0], col[total as usize]));
        }
        if !col.iter().any(|v| *v > 0.0) {
            return Err(format!("{} is identically zero", s.name()));
        }
    }
    let opt7 = catalog::build("Opt7").unwrap().genome;
    for (x, y) in [(Axis::G, Axis::VHat), (Axis::G, Axis::W)] {
        for t in [0, total / 4, total / 2, total] {
            let spec = SurfaceSpec { x, y, lo: -50.0, hi: 50.0, points: 101, clock: Clock::new(t, total) };
            let s = plot::surface(&opt7, &spec).map_err(|e| e.to_string())?;
            if let Some(r) = s.rows.iter().find(|r| !(r[2] > -1.0 && r[2] < 1.0)) {
                return Err(format!("Opt7 surface value {} at ({}, {}) t={t}", r[2], r[0], r[1]));
            }
        }
    }
    Ok("LR1-LR9 vanish at both ends; Opt7 surface inside (-1, 1)".into())
}
