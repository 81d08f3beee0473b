//! Interprets a genome as a stateful optimizer.
//!
//! Per step: EMAs advance with the fresh gradient, the update `U` is computed
//! by evaluating the active nodes in index order (each decayed connection is
//! scaled by its decay graph evaluated at the clock), and `U` is applied with
//! the genome's momentum form.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Momentum, NodeRef, OptimizerGenome, Source};
use crate::operands::{
    OperandId, OperandInputs, BANK_BETAS_LAMBDA, BANK_BETAS_S, BANK_BETAS_V, BETA_LAMBDA, BETA_S, BETA_V,
    OPERANDS,
};
use crate::ops::{self, Op, Unary};
use crate::schedules::{eval_decay_graph, Clock};
use crate::seed::derive_seed;

/// All mutable optimizer state for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub v_hat: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub v_bank: [Vec<f64>; 3],
    pub s_bank: [Vec<f64>; 3],
    pub lambda_bank: [Vec<f64>; 3],
    /// One register per state-saving node, keyed by node position.
    pub node_regs: BTreeMap<NodeRef, Vec<f64>>,
    /// `z` of the momentum and Nesterov forms; allocated for every genome.
    pub momentum_slot: Vec<f64>,
    pub step: u64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub update_norm: f64,
    pub nonfinite: bool,
    /// Decay multiplier applied on each decayed connection (node, slot).
    pub decay_values: Vec<(NodeRef, usize, f64)>,
}

impl OptimizerState {
    pub fn len(&self) -> usize {
        self.v_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_hat.is_empty()
    }

    pub fn update_emas(&mut self, g: &[f64]) {
        update_emas(self, g)
    }

    fn inputs_at(&self, g: &[f64], w: &[f64], i: usize) -> OperandInputs {
        OperandInputs {
            g: g[i],
            w: w[i],
            v_hat: self.v_hat[i],
            s_hat: self.s_hat[i],
            lambda_hat: self.lambda_hat[i],
            v_bank: [self.v_bank[0][i], self.v_bank[1][i], self.v_bank[2][i]],
            s_bank: [self.s_bank[0][i], self.s_bank[1][i], self.s_bank[2][i]],
            lambda_bank: [self.lambda_bank[0][i], self.lambda_bank[1][i], self.lambda_bank[2][i]],
        }
    }
}

/// Zeroed state for a parameter tensor of `len` elements.
pub fn init_state(genome: &OptimizerGenome, len: usize, rng_seed: u64) -> OptimizerState {
    assert!(len > 0, "parameter tensor must be nonempty");
    let zeros = || vec![0.0; len];
    let node_regs = genome
        .graph
        .node_refs()
        .filter(|&r| genome.graph.node(r).op.is_stateful())
        .map(|r| (r, zeros()))
        .collect();
    OptimizerState {
        v_hat: zeros(),
        s_hat: zeros(),
        lambda_hat: zeros(),
        v_bank: [zeros(), zeros(), zeros()],
        s_bank: [zeros(), zeros(), zeros()],
        lambda_bank: [zeros(), zeros(), zeros()],
        node_regs,
        momentum_slot: zeros(),
        step: 0,
        rng_seed,
    }
}

fn ema(acc: &mut [f64], beta: f64, x: impl Iterator<Item = f64>) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a = beta * *a + (1.0 - beta) * v;
    }
}

/// `m <- beta*m + (1-beta)*x` for `v̂, ŝ, λ̂` and every bank entry; no bias
/// correction.
pub fn update_emas(state: &mut OptimizerState, g: &[f64]) {
    let g1 = || g.iter().copied();
    let g2 = || g.iter().map(|x| x * x);
    let g3 = || g.iter().map(|x| x * x * x);
    ema(&mut state.v_hat, BETA_V, g1());
    ema(&mut state.s_hat, BETA_S, g2());
    ema(&mut state.lambda_hat, BETA_LAMBDA, g3());
    for j in 0..3 {
        ema(&mut state.v_bank[j], BANK_BETAS_V[j], g1());
        ema(&mut state.s_bank[j], BANK_BETAS_S[j], g2());
        ema(&mut state.lambda_bank[j], BANK_BETAS_LAMBDA[j], g3());
    }
}

/// Scalar semantics of one operation. For state-saving ops `reg` is the
/// current register and the returned value is the new register.
pub fn eval_op(op: Op, x1: f64, x2: Option<f64>, reg: Option<f64>) -> f64 {
    match op {
        Op::Unary(u) => u.apply(x1),
        Op::Binary(b) => b.apply(x1, x2.expect("binary op needs two inputs")),
        Op::State(s) => s.advance(x1, reg.expect("state op needs its register")),
    }
}

/// `x` with entries zeroed with probability `p`; survivors scaled by
/// `1/(1-p)`.
pub fn drop_in_place(xs: &mut [f64], p: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    for x in xs.iter_mut() {
        if rng.gen_bool(p) {
            *x = 0.0;
        } else {
            *x *= keep;
        }
    }
}

fn node_code(r: NodeRef) -> u64 {
    match r {
        NodeRef::Hidden(i) => i as u64,
        NodeRef::Output => u64::MAX,
    }
}

/// Evaluates the update `U`. EMAs must already include this step's gradient.
/// Registers of active state-saving nodes advance exactly once.
pub fn compute_update(
    genome: &OptimizerGenome,
    state: &mut OptimizerState,
    g: &[f64],
    w: &[f64],
    clock: Clock,
) -> (Vec<f64>, StepReport) {
    let n = g.len();
    assert_eq!(w.len(), n);
    assert_eq!(state.len(), n);
    let graph = &genome.graph;
    let active = graph.active_hidden();

    let mut operand_cache: Vec<Option<Vec<f64>>> = vec![None; OPERANDS.len()];
    let mut values: Vec<Option<Vec<f64>>> = vec![None; graph.hidden.len()];
    let mut report = StepReport::default();

    let mut order: Vec<NodeRef> =
        (0..graph.hidden.len()).filter(|&i| active[i]).map(NodeRef::Hidden).collect();
    order.push(NodeRef::Output);

    let mut output = Vec::new();
    for r in order {
        let node = graph.node(r);
        let mut args: Vec<Vec<f64>> = Vec::with_capacity(node.inputs.len());
        for (slot, inp) in node.inputs.iter().enumerate() {
            let mut v = match inp.source {
                Source::Leaf(o) => {
                    let idx = o as usize;
                    if operand_cache[idx].is_none() {
                        operand_cache[idx] = Some(operand_tensor(state, o, g, w));
                    }
                    operand_cache[idx].clone().expect("just filled")
                }
                Source::Node(j) => values[j].clone().expect("earlier active node evaluated"),
            };
            if let Some(dg) = &inp.decay {
                let scale = eval_decay_graph(dg, clock);
                report.decay_values.push((r, slot, scale));
                for x in v.iter_mut() {
                    *x *= scale;
                }
            }
            args.push(v);
        }
        let out = match node.op {
            Op::Unary(u) => {
                let mut x = args.pop().expect("arity 1");
                match u {
                    Unary::Norm => ops::norm_in_place(&mut x),
                    Unary::Drop50 | Unary::Drop30 | Unary::Drop10 => {
                        let p = u.drop_probability().expect("drop op");
                        drop_in_place(&mut x, p, derive_seed(state.rng_seed, &[state.step, node_code(r)]));
                    }
                    _ => x.iter_mut().for_each(|e| *e = u.apply(*e)),
                }
                x
            }
            Op::Binary(b) => {
                let c = args.pop().expect("arity 2");
                let mut a = args.pop().expect("arity 2");
                for (x, y) in a.iter_mut().zip(&c) {
                    *x = b.apply(*x, *y);
                }
                a
            }
            Op::State(s) => {
                let x = args.pop().expect("arity 1");
                let reg = state.node_regs.entry(r).or_insert_with(|| vec![0.0; n]);
                for (z, xi) in reg.iter_mut().zip(&x) {
                    *z = s.advance(*xi, *z);
                }
                reg.clone()
            }
        };
        match r {
            NodeRef::Hidden(i) => values[i] = Some(out),
            NodeRef::Output => output = out,
        }
    }
    report.update_norm = output.iter().map(|x| x * x).sum::<f64>().sqrt();
    report.nonfinite = output.iter().any(|x| !x.is_finite());
    (output, report)
}

fn operand_tensor(state: &OptimizerState, o: OperandId, g: &[f64], w: &[f64]) -> Vec<f64> {
    (0..g.len()).map(|i| o.value(&state.inputs_at(g, w, i))).collect()
}

/// Momentum coefficient: cosine cycle over the horizon, 0.95 at `t = 0`,
/// 0.85 at `t = T/2`.
pub fn momentum_beta(clock: Clock) -> f64 {
    0.90 + 0.05 * (2.0 * PI * clock.frac()).cos()
}

/// One full optimizer step on `w` in place: EMAs, update, momentum form.
pub fn apply_step(
    genome: &OptimizerGenome,
    state: &mut OptimizerState,
    w: &mut [f64],
    g: &[f64],
    lr: f64,
    clock: Clock,
) -> StepReport {
    update_emas(state, g);
    let (u, report) = compute_update(genome, state, g, w, clock);
    let beta = momentum_beta(clock);
    match genome.momentum {
        Momentum::None => {
            for (wi, ui) in w.iter_mut().zip(&u) {
                *wi -= lr * ui;
            }
        }
        Momentum::Momentum => {
            for ((wi, zi), ui) in w.iter_mut().zip(state.momentum_slot.iter_mut()).zip(&u) {
                *zi = beta * *zi - lr * ui;
                *wi += *zi;
            }
        }
        Momentum::Nesterov => {
            for ((wi, zi), ui) in w.iter_mut().zip(state.momentum_slot.iter_mut()).zip(&u) {
                *zi = beta * *zi - lr * ui;
                *wi += beta * *zi - lr * ui;
            }
        }
    }
    state.step += 1;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Input, Node};
    use crate::mutation::schedule_decay;
    use crate::ops::{Binary, StateUnary};
    use crate::schedules::ScheduleId;
    use OperandId::*;

    fn genome(momentum: Momentum, output: Node<OperandId>, hidden: Vec<Node<OperandId>>) -> OptimizerGenome {
        OptimizerGenome::new("t", momentum, Graph { hidden, output })
    }

    fn identity(m: Momentum) -> OptimizerGenome {
        genome(m, Node::unary(Unary::Identity, Input::leaf(G)), vec![])
    }

    fn constant(m: Momentum) -> OptimizerGenome {
        genome(m, Node::unary(Unary::Identity, Input::leaf(One)), vec![])
    }

    #[test]
    fn init_state_layout() {
        let g = genome(
            Momentum::None,
            Node::binary(Binary::Add, Input::node(0), Input::node(1)),
            vec![
                Node::state(StateUnary::Ema95, Input::leaf(G)),
                Node::state(StateUnary::RunMax, Input::leaf(G)),
            ],
        );
        let s = init_state(&g, 3, 0);
        assert_eq!(s.v_hat, vec![0.0; 3]);
        assert_eq!(s.node_regs.len(), 2);
        assert_eq!(s.momentum_slot.len(), 3);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn ema_conventions() {
        let g = identity(Momentum::None);
        let mut s = init_state(&g, 1, 0);
        update_emas(&mut s, &[1.0]);
        assert!((s.v_hat[0] - 0.1).abs() < 1e-15);
        update_emas(&mut s, &[1.0]);
        assert!((s.v_hat[0] - 0.19).abs() < 1e-15);

        let mut s = init_state(&g, 1, 0);
        update_emas(&mut s, &[2.0]);
        assert_eq!(s.v_bank[0][0], 2.0);
        assert_eq!(s.s_bank[0][0], 4.0);
        assert_eq!(s.lambda_bank[0][0], 8.0);
    }

    #[test]
    fn identity_update() {
        let g = identity(Momentum::None);
        let mut s = init_state(&g, 2, 0);
        let (u, r) = compute_update(&g, &mut s, &[1.0, -2.0], &[0.0, 0.0], Clock::new(0, 10));
        assert_eq!(u, vec![1.0, -2.0]);
        assert!(!r.nonfinite);
    }

    #[test]
    fn decayed_edge_vanishes_at_horizon() {
        let g = genome(
            Momentum::None,
            Node::unary(Unary::Identity, Input::leaf(G).decayed(schedule_decay(ScheduleId::Ld))),
            vec![],
        );
        let mut s = init_state(&g, 2, 0);
        let (u, r) = compute_update(&g, &mut s, &[1.0, -2.0], &[0.0, 0.0], Clock::new(10, 10));
        assert!(u.iter().all(|&x| x == 0.0));
        assert_eq!(r.decay_values, vec![(NodeRef::Output, 0, 0.0)]);
    }

    #[test]
    fn momentum_forms() {
        let c0 = Clock::new(0, 100);
        // no momentum: w - lr*U
        let g = constant(Momentum::None);
        let mut s = init_state(&g, 1, 0);
        let mut w = [1.0];
        let u2 = genome(Momentum::None, Node::unary(Unary::Identity, Input::leaf(Two)), vec![]);
        apply_step(&u2, &mut s, &mut w, &[0.0], 0.1, c0);
        assert!((w[0] - 0.8).abs() < 1e-15);
        assert_eq!(s.step, 1);

        assert!((momentum_beta(c0) - 0.95).abs() < 1e-15);
        assert!((momentum_beta(Clock::new(50, 100)) - 0.85).abs() < 1e-15);

        let g = constant(Momentum::Momentum);
        let mut s = init_state(&g, 1, 0);
        let mut w = [0.0];
        apply_step(&g, &mut s, &mut w, &[0.0], 0.1, c0);
        assert!((s.momentum_slot[0] + 0.1).abs() < 1e-15);
        assert!((w[0] + 0.1).abs() < 1e-15);

        let g = constant(Momentum::Nesterov);
        let mut s = init_state(&g, 1, 0);
        let mut w = [0.0];
        apply_step(&g, &mut s, &mut w, &[0.0], 0.1, c0);
        assert!((w[0] + 0.195).abs() < 1e-15);
    }

    #[test]
    fn fanned_out_register_advances_once() {
        // h0 = runmax[g]; out = h0 + h0
        let g = genome(
            Momentum::None,
            Node::binary(Binary::Add, Input::node(0), Input::node(0)),
            vec![Node::state(StateUnary::Ema95, Input::leaf(G))],
        );
        let mut s = init_state(&g, 1, 0);
        let (u, _) = compute_update(&g, &mut s, &[1.0], &[0.0], Clock::new(0, 10));
        assert!((s.node_regs[&NodeRef::Hidden(0)][0] - 0.95).abs() < 1e-15);
        assert!((u[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn inactive_state_nodes_do_not_advance() {
        let g = genome(
            Momentum::None,
            Node::unary(Unary::Identity, Input::leaf(G)),
            vec![Node::state(StateUnary::Ema95, Input::leaf(G))],
        );
        let mut s = init_state(&g, 1, 0);
        compute_update(&g, &mut s, &[1.0], &[0.0], Clock::new(0, 10));
        assert_eq!(s.node_regs[&NodeRef::Hidden(0)][0], 0.0);
    }

    #[test]
    fn drop_is_seeded() {
        let g = genome(Momentum::None, Node::unary(Unary::Drop50, Input::leaf(G)), vec![]);
        let grad: Vec<f64> = (0..64).map(|i| i as f64 + 1.0).collect();
        let w = vec![0.0; 64];
        let run = |seed| {
            let mut s = init_state(&g, 64, seed);
            compute_update(&g, &mut s, &grad, &w, Clock::new(0, 10)).0
        };
        let a = run(9);
        assert_eq!(a, run(9));
        assert_ne!(a, run(10));
        let dropped = a.iter().filter(|&&x| x == 0.0).count();
        assert!(dropped > 10 && dropped < 54);
        for (x, gi) in a.iter().zip(&grad) {
            assert!(*x == 0.0 || (*x - 2.0 * gi).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_op_scalar_api() {
        assert_eq!(eval_op(Op::Binary(Binary::Clip), 5.0, Some(2.0), None), 2.0);
        assert_eq!(eval_op(Op::Unary(Unary::Softsign), 1.0, None, None), 0.5);
        assert_eq!(eval_op(Op::Unary(Unary::MinZero), -2.0, None, None), -2.0);
        let z = eval_op(Op::State(StateUnary::RunMax), 3.0, None, Some(0.0));
        assert_eq!(eval_op(Op::State(StateUnary::RunMax), 1.0, None, Some(z)), 3.0);
    }
}
