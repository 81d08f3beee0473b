use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::mlp::{ClassifierSpec, Mlp};
use crate::engine::{apply_step, init_state, OptimizerState};
use crate::graph::OptimizerGenome;
use crate::integrity::LR_SWEEP;
use crate::schedules::{Clock, OneCycle};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessConfig {
    pub sweep_steps: u64,
    pub full_steps: u64,
    pub grace_steps: u64,
    pub batch: usize,
    pub lr_set: Vec<f64>,
    /// Stage-1 threshold is `chance + theta1_margin`.
    pub theta1_margin: f64,
    /// Stage-2 threshold is `chance + theta2_frac * (1 - chance)`.
    pub theta2_frac: f64,
    /// Train accuracy is the mean over this many most recent steps.
    pub acc_window: usize,
    pub eval_every: u64,
    pub classifier: ClassifierSpec,
    pub one_cycle: OneCycle,
    /// Skip the sweep and train stage 2 at this learning rate.
    pub forced_lr: Option<f64>,
    pub seed: u64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        FitnessConfig {
            sweep_steps: 800,
            full_steps: 8000,
            grace_steps: 1000,
            batch: 64,
            lr_set: LR_SWEEP.to_vec(),
            theta1_margin: 0.15,
            theta2_frac: 1.0 / 3.0,
            acc_window: 50,
            eval_every: 100,
            classifier: ClassifierSpec::default(),
            one_cycle: OneCycle::default(),
            forced_lr: None,
            seed: 0,
        }
    }
}

impl FitnessConfig {
    pub fn validate(&self) -> Result<(), crate::Error> {
        let bad = |m: &str| Err(crate::Error::Config(m.to_string()));
        if self.sweep_steps == 0 || self.full_steps == 0 {
            return bad("step budgets must be positive");
        }
        if self.batch == 0 || self.acc_window == 0 || self.eval_every == 0 {
            return bad("batch, acc_window and eval_every must be positive");
        }
        if self.lr_set.is_empty() && self.forced_lr.is_none() {
            return bad("lr_set is empty");
        }
        if self.classifier.base == 0 {
            return bad("classifier base width must be positive");
        }
        Ok(())
    }

    pub fn theta1(&self, chance: f64) -> f64 {
        chance + self.theta1_margin
    }

    pub fn theta2(&self, chance: f64) -> f64 {
        chance + self.theta2_frac * (1.0 - chance)
    }

    /// Same configuration with every step budget multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: u64| ((v as f64 * factor).round() as u64).max(1);
        FitnessConfig {
            sweep_steps: s(self.sweep_steps),
            full_steps: s(self.full_steps),
            grace_steps: s(self.grace_steps),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    LrSweepFailed,
    Aborted,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub best_val_acc: f64,
    pub best_lr: f64,
    pub stage_reached: Stage,
    pub steps_run: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Per-step minibatch accuracy.
    pub train_acc: Vec<f64>,
    /// Best validation accuracy over the periodic evaluations.
    pub val_acc: f64,
    pub val_trace: Vec<(u64, f64)>,
    pub nonfinite: bool,
    /// Set when the abort rule fired.
    pub aborted_at: Option<u64>,
}

impl TrainOutcome {
    pub fn steps_run(&self) -> u64 {
        self.train_acc.len() as u64
    }

    /// Mean train accuracy over the last `window` steps.
    pub fn recent_train_acc(&self, window: usize) -> f64 {
        recent_mean(&self.train_acc, window)
    }
}

fn recent_mean(xs: &[f64], window: usize) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let tail = &xs[xs.len().saturating_sub(window)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Abort rule checked after every step once past `grace`.
#[derive(Debug, Clone, Copy)]
struct AbortRule {
    grace: u64,
    threshold: f64,
    window: usize,
}

/// Trains a fresh classifier for `steps` steps with clock horizon
/// `clock_total`, driving every parameter tensor through `apply_step` with
/// `lr * one_cycle(t)`.
#[allow(clippy::too_many_arguments)]
pub fn train_eval(
    genome: &OptimizerGenome,
    spec: &ClassifierSpec,
    data: &Dataset,
    steps: u64,
    lr: f64,
    clock_total: u64,
    cfg: &FitnessConfig,
) -> TrainOutcome {
    run_training(genome, spec, data, steps, lr, clock_total, cfg, None)
}

#[allow(clippy::too_many_arguments)]
fn run_training(
    genome: &OptimizerGenome,
    spec: &ClassifierSpec,
    data: &Dataset,
    steps: u64,
    lr: f64,
    clock_total: u64,
    cfg: &FitnessConfig,
    abort: Option<AbortRule>,
) -> TrainOutcome {
    assert!(steps <= clock_total, "steps must not exceed the clock horizon");
    let train = &data.train;
    let mut net = Mlp::new(spec, train.dim, data.classes);
    let mut states: Vec<OptimizerState> = net
        .params
        .iter()
        .enumerate()
        .map(|(j, p)| init_state(genome, p.len(), derive_seed(cfg.seed, &[1, j as u64])))
        .collect();
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2]));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();

    let mut out = TrainOutcome {
        train_acc: Vec::with_capacity(steps as usize),
        val_acc: net.accuracy(&data.val.x, &data.val.y),
        val_trace: Vec::new(),
        nonfinite: false,
        aborted_at: None,
    };
    out.val_trace.push((0, out.val_acc));
    let batch = cfg.batch.min(train.len());
    let mut rows = Vec::with_capacity(batch);
    for t in 0..steps {
        rows.clear();
        while rows.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            rows.push(order[cursor]);
            cursor += 1;
        }
        let res = net.forward_backward(&train.x, &train.y, &rows);
        if !res.loss.is_finite() {
            out.nonfinite = true;
            break;
        }
        out.train_acc.push(res.correct as f64 / batch as f64);
        let clock = Clock::new(t, clock_total);
        let step_lr = lr * cfg.one_cycle.eval(clock);
        let mut bad = false;
        for ((p, g), st) in net.params.iter_mut().zip(&res.grads).zip(states.iter_mut()) {
            let report = apply_step(genome, st, p, g, step_lr, clock);
            bad |= report.nonfinite || p.iter().any(|v| !v.is_finite());
        }
        if bad {
            out.nonfinite = true;
            break;
        }
        if (t + 1) % cfg.eval_every == 0 || t + 1 == steps {
            let acc = net.accuracy(&data.val.x, &data.val.y);
            out.val_trace.push((t + 1, acc));
            out.val_acc = out.val_acc.max(acc);
        }
        if let Some(rule) = abort {
            if t + 1 > rule.grace && recent_mean(&out.train_acc, rule.window) < rule.threshold {
                out.aborted_at = Some(t + 1);
                break;
            }
        }
    }
    out
}

/// Outcome of the stage-1 learning-rate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// `(lr, recent train acc, best val acc, passed)` per rate.
    pub runs: Vec<(f64, f64, f64, bool)>,
    /// Passing rate with the highest validation accuracy; earlier rates win ties.
    pub best_lr: Option<f64>,
    pub steps_run: u64,
}

impl SweepResult {
    pub fn passed(&self) -> bool {
        self.best_lr.is_some()
    }
}

/// Short run per learning rate; a rate passes when its recent train accuracy
/// reaches `theta1`.
pub fn lr_sweep(genome: &OptimizerGenome, data: &Dataset, cfg: &FitnessConfig) -> SweepResult {
    let theta1 = cfg.theta1(data.chance());
    let mut res = SweepResult { runs: Vec::new(), best_lr: None, steps_run: 0 };
    let mut best_val = f64::NEG_INFINITY;
    for &lr in &cfg.lr_set {
        let o = train_eval(genome, &cfg.classifier, data, cfg.sweep_steps, lr, cfg.sweep_steps, cfg);
        res.steps_run += o.steps_run();
        let acc = o.recent_train_acc(cfg.acc_window);
        let passed = !o.nonfinite && acc >= theta1;
        if passed && o.val_acc > best_val {
            best_val = o.val_acc;
            res.best_lr = Some(lr);
        }
        res.runs.push((lr, acc, o.val_acc, passed));
    }
    res
}

/// Stage-2 run at `lr` with the abort rule active after the grace period.
pub fn full_run(genome: &OptimizerGenome, data: &Dataset, cfg: &FitnessConfig, lr: f64) -> TrainOutcome {
    let rule = AbortRule { grace: cfg.grace_steps, threshold: cfg.theta2(data.chance()), window: cfg.acc_window };
    run_training(genome, &cfg.classifier, data, cfg.full_steps, lr, cfg.full_steps, cfg, Some(rule))
}

/// Two-stage fitness: a short run per learning rate gated by `theta1`, then
/// a long run at the best rate gated by `theta2` after the grace period.
pub fn fitness(genome: &OptimizerGenome, data: &Dataset, cfg: &FitnessConfig) -> FitnessRecord {
    match cfg.forced_lr {
        Some(lr) => stage_two(genome, data, cfg, lr, 0),
        None => fitness_after_sweep(genome, data, cfg, &lr_sweep(genome, data, cfg)),
    }
}

/// Completes fitness from an already computed sweep.
pub fn fitness_after_sweep(genome: &OptimizerGenome, data: &Dataset, cfg: &FitnessConfig, sweep: &SweepResult) -> FitnessRecord {
    match sweep.best_lr {
        Some(lr) => stage_two(genome, data, cfg, lr, sweep.steps_run),
        None => {
            let mut best = (0.0, cfg.lr_set.first().copied().unwrap_or(0.0));
            for &(lr, _, val, _) in &sweep.runs {
                if val > best.0 {
                    best = (val, lr);
                }
            }
            FitnessRecord {
                best_val_acc: best.0,
                best_lr: best.1,
                stage_reached: Stage::LrSweepFailed,
                steps_run: sweep.steps_run,
            }
        }
    }
}

fn stage_two(genome: &OptimizerGenome, data: &Dataset, cfg: &FitnessConfig, lr: f64, prior_steps: u64) -> FitnessRecord {
    let o = full_run(genome, data, cfg, lr);
    let stage = if o.nonfinite || o.aborted_at.is_some() { Stage::Aborted } else { Stage::Completed };
    FitnessRecord { best_val_acc: o.val_acc, best_lr: lr, stage_reached: stage, steps_run: prior_steps + o.steps_run() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::data::{make_dataset, DataConfig};

    fn small() -> FitnessConfig {
        FitnessConfig { sweep_steps: 100, full_steps: 200, grace_steps: 50, lr_set: vec![0.1, 0.01], ..Default::default() }
    }

    #[test]
    fn thresholds() {
        let c = FitnessConfig::default();
        assert!((c.theta1(0.5) - 0.65).abs() < 1e-12);
        assert!((c.theta2(0.1) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_reports_untrained_accuracy() {
        let data = make_dataset(&DataConfig::default()).unwrap();
        let sgd = crate::catalog::build("SGD").unwrap().genome;
        let cfg = small();
        let o = train_eval(&sgd, &cfg.classifier, &data, 0, 0.1, 10, &cfg);
        assert!(o.train_acc.is_empty());
        let net = Mlp::new(&cfg.classifier, 2, 2);
        assert_eq!(o.val_acc, net.accuracy(&data.val.x, &data.val.y));
    }

    #[test]
    fn fitness_is_deterministic_and_bounded_by_traces() {
        let data = make_dataset(&DataConfig::default()).unwrap();
        let adam = crate::catalog::build("Adam").unwrap().genome;
        let cfg = small();
        let a = fitness(&adam, &data, &cfg);
        assert_eq!(a, fitness(&adam, &data, &cfg));
        assert!((0.0..=1.0).contains(&a.best_val_acc));
    }
}
