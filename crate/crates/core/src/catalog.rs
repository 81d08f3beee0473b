//! Discovered optimizers, Adam variants, ablations and standard baselines,
//! each built from search-space primitives and paired with a hand-written
//! closed-form update used to cross-check the graph interpreter.

use crate::engine::OptimizerState;
use crate::graph::{DecayGraph, Graph, Input, Momentum, Node, OptimizerGenome};
use crate::operands::OperandId::{self, *};
use crate::ops::{Binary, Unary};
use crate::schedules::{Clock, ScheduleId};
use crate::Error;

/// Hidden-node count catalog genomes are padded to, matching random
/// initialization so seeded searches have room to grow.
const PADDED_HIDDEN: usize = 4;

pub const OPTIMIZERS: [&str; 10] = ["Opt1", "Opt2", "Opt3", "Opt4", "Opt5", "Opt6", "Opt7", "Opt8", "Opt9", "Opt10"];
pub const ABLATIONS: [&str; 7] = ["Opt4_1", "Opt4_2", "Opt6_1", "Opt7_1", "Opt8_1", "Opt9_1", "Opt10_1"];
pub const ADAM_VARIANTS: [&str; 5] = ["A1", "A2", "A3", "A4", "A5"];
pub const BASELINES: [&str; 8] =
    ["Adam", "RMSProp", "SGD", "Momentum", "Nesterov", "QHM", "PowerSign-ld", "AddSign-ld"];

pub fn names() -> Vec<&'static str> {
    OPTIMIZERS
        .iter()
        .chain(&ABLATIONS)
        .chain(&ADAM_VARIANTS)
        .chain(&BASELINES)
        .copied()
        .collect()
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub genome: OptimizerGenome,
    pub notes: &'static str,
}

impl CatalogEntry {
    /// Closed-form update for this entry.
    pub fn oracle(&self, g: &[f64], w: &[f64], state: &OptimizerState, clock: Clock) -> Vec<f64> {
        oracle_update(self.name, g, w, state, clock).expect("catalog names always have an oracle")
    }
}

fn leaf(o: OperandId) -> Input<OperandId> {
    Input::leaf(o)
}

fn node(i: usize) -> Input<OperandId> {
    Input::node(i)
}

fn decay_unary(op: Unary, s: ScheduleId) -> DecayGraph {
    Graph { hidden: vec![], output: Node::unary(op, Input::leaf(s)) }.padded(1)
}

fn decay_binary(op: Binary, a: ScheduleId, b: ScheduleId) -> DecayGraph {
    Graph { hidden: vec![], output: Node::binary(op, Input::leaf(a), Input::leaf(b)) }.padded(1)
}

/// `erfc(erfc(ci))`
fn erfc_erfc_ci() -> DecayGraph {
    Graph {
        hidden: vec![Node::unary(Unary::Erfc, Input::leaf(ScheduleId::Ci))],
        output: Node::unary(Unary::Erfc, Input::node(0)),
    }
}

fn maybe(inp: Input<OperandId>, dg: DecayGraph, keep: bool) -> Input<OperandId> {
    if keep {
        inp.decayed(dg)
    } else {
        inp
    }
}

fn genome(name: &str, momentum: Momentum, hidden: Vec<Node<OperandId>>, output: Node<OperandId>) -> OptimizerGenome {
    OptimizerGenome::new(name, momentum, Graph { hidden, output }.padded(PADDED_HIDDEN))
}

/// `(0.3g+0.7v̂) + softsign(inner(1e-5w, 1e-5w - mix))`
fn qhm_softsign_family(name: &str, inner: Binary, mix: OperandId) -> OptimizerGenome {
    genome(
        name,
        Momentum::None,
        vec![
            Node::binary(Binary::Sub, leaf(W1e5), leaf(mix)),
            Node::binary(inner, leaf(W1e5), node(0)),
            Node::unary(Unary::Softsign, node(1)),
        ],
        Node::binary(Binary::Add, leaf(QhmV), node(2)),
    )
}

fn opt4(name: &str, outer: bool, inner: bool) -> OptimizerGenome {
    genome(
        name,
        Momentum::None,
        vec![
            Node::unary(Unary::Exp, leaf(VHat)),
            Node::binary(
                Binary::Clip,
                leaf(Two),
                maybe(node(0), decay_unary(Unary::Arctan, ScheduleId::Dd), inner),
            ),
        ],
        Node::binary(
            Binary::Div,
            maybe(leaf(QhmV), erfc_erfc_ci(), outer),
            maybe(node(1), decay_unary(Unary::TanhGrad, ScheduleId::Cir), outer),
        ),
    )
}

fn opt6(name: &str, decays: bool) -> OptimizerGenome {
    genome(
        name,
        Momentum::None,
        vec![
            Node::unary(Unary::Exp, leaf(W1e4)),
            Node::unary(Unary::Abs, maybe(node(0), decay_unary(Unary::TanhGrad, ScheduleId::Ci), decays)),
        ],
        Node::binary(
            Binary::Div,
            maybe(leaf(QhmV), erfc_erfc_ci(), decays),
            maybe(node(1), decay_unary(Unary::TanhGrad, ScheduleId::Cir), decays),
        ),
    )
}

fn opt7_family(name: &str, outer: Unary, decays: bool) -> OptimizerGenome {
    genome(
        name,
        Momentum::None,
        vec![Node::unary(Unary::Arcsinh, leaf(QhmV))],
        Node::unary(
            outer,
            maybe(node(0), decay_binary(Binary::Max, ScheduleId::Cci, ScheduleId::Lir), decays),
        ),
    )
}

fn opt9(name: &str, decays: bool) -> OptimizerGenome {
    genome(
        name,
        Momentum::Nesterov,
        vec![Node::unary(Unary::Arctan, leaf(QhmS)), Node::unary(Unary::Exp, node(0))],
        Node::binary(Binary::Mul, maybe(leaf(G), decay_unary(Unary::Erfc, ScheduleId::Ed), decays), node(1)),
    )
}

fn opt10(name: &str, decays: bool) -> OptimizerGenome {
    genome(
        name,
        Momentum::Nesterov,
        vec![Node::unary(
            Unary::BesselI1e,
            maybe(leaf(G), decay_binary(Binary::Mul, ScheduleId::Dd, ScheduleId::Li), decays),
        )],
        Node::unary(Unary::BesselI1e, node(0)),
    )
}

fn clip_variant(name: &str, bound: Vec<Node<OperandId>>) -> OptimizerGenome {
    let last = bound.len() - 1;
    genome(name, Momentum::None, bound, Node::binary(Binary::Clip, leaf(VHat), node(last)))
}

fn sign_product() -> Node<OperandId> {
    Node::binary(Binary::Mul, leaf(SignG), leaf(SignVHat))
}

fn ld() -> DecayGraph {
    decay_unary(Unary::Identity, ScheduleId::Ld)
}

pub fn build(name: &str) -> Result<CatalogEntry, Error> {
    let canonical = names()
        .into_iter()
        .find(|n| n.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownCatalog(name.to_string()))?;
    let (genome, notes) = match canonical {
        "Opt1" => (qhm_softsign_family(canonical, Binary::Clip, QhmS), "QHM + softsign(clip(1e-5w, 1e-5w - (0.05g²+0.95ŝ)))"),
        "Opt2" => (qhm_softsign_family(canonical, Binary::DivSqrt1p, QhmS), "QHM + softsign of a 1e-5w ratio against the ŝ mix"),
        "Opt3" => (qhm_softsign_family(canonical, Binary::DivSqrt1p, QhmLambda), "QHM + softsign of a 1e-5w ratio against the λ̂ mix"),
        "Opt4" => (opt4(canonical, true, true), "t1·QHM / (t2·clip(2, t3·e^v̂))"),
        "Opt5" => (
            genome(
                canonical,
                Momentum::None,
                vec![Node::unary(Unary::Exp, leaf(VHat)), Node::binary(Binary::Clip, leaf(Two), node(0))],
                Node::binary(
                    Binary::Div,
                    leaf(QhmV).decayed(erfc_erfc_ci()),
                    node(1).decayed(decay_unary(Unary::TanhGrad, ScheduleId::Cir)),
                ),
            ),
            "t1·QHM / (t2·clip(2, e^v̂))",
        ),
        "Opt6" => (opt6(canonical, true), "t1·QHM / (t2·|t3·e^(1e-4w)|)"),
        "Opt7" => (opt7_family(canonical, Unary::Tanh, true), "tanh(t1·arcsinh(QHM))"),
        "Opt8" => (opt7_family(canonical, Unary::Arcsinh, true), "arcsinh(t1·arcsinh(QHM))"),
        "Opt9" => (opt9(canonical, true), "Nesterov; t1·g·e^arctan(0.05g²+0.95ŝ)"),
        "Opt10" => (opt10(canonical, true), "Nesterov; i1e(i1e(t1·g))"),
        "Opt4_1" => (opt4(canonical, false, true), "Opt4 without t1 and t2"),
        "Opt4_2" => (opt4(canonical, false, false), "Opt4 without decay functions"),
        "Opt6_1" => (opt6(canonical, false), "Opt6 without decay functions"),
        "Opt7_1" => (opt7_family(canonical, Unary::Tanh, false), "Opt7 without decay functions"),
        "Opt8_1" => (opt7_family(canonical, Unary::Arcsinh, false), "Opt8 without decay functions"),
        "Opt9_1" => (opt9(canonical, false), "Opt9 without decay functions"),
        "Opt10_1" => (opt10(canonical, false), "Opt10 without decay functions"),
        "A1" => (clip_variant(canonical, vec![Node::unary(Unary::SqrtAbs, leaf(SHat))]), "clip(v̂, ±√ŝ)"),
        "A2" => (
            clip_variant(
                canonical,
                vec![Node::unary(Unary::LnAbs, leaf(SHat)), Node::unary(Unary::Abs, node(0))],
            ),
            "clip(v̂, ±|ln ŝ|)",
        ),
        "A3" => (
            clip_variant(
                canonical,
                vec![Node::unary(Unary::LnAbs, leaf(SHat)), Node::unary(Unary::SqrtAbs, node(0))],
            ),
            "clip(v̂, ±√|ln ŝ|)",
        ),
        "A4" => (clip_variant(canonical, vec![Node::unary(Unary::Sigmoid, leaf(SHat))]), "clip(v̂, ±sigmoid(ŝ))"),
        "A5" => (
            genome(
                canonical,
                Momentum::None,
                vec![
                    Node::unary(Unary::SqrtAbs, leaf(SHat)),
                    Node::binary(Binary::Clip, leaf(VHat), node(0)),
                ],
                Node::unary(Unary::Norm, node(1)),
            ),
            "norm(clip(v̂, ±√ŝ))",
        ),
        "Adam" => (
            genome(
                canonical,
                Momentum::None,
                vec![Node::unary(Unary::SqrtAbs, leaf(SHat))],
                Node::binary(Binary::Div, leaf(VHat), node(0)),
            ),
            "v̂/(√ŝ+eps), no bias correction",
        ),
        "RMSProp" => (
            genome(
                canonical,
                Momentum::None,
                vec![Node::unary(Unary::SqrtAbs, leaf(SHat))],
                Node::binary(Binary::Div, leaf(G), node(0)),
            ),
            "g/(√ŝ+eps)",
        ),
        "SGD" => (genome(canonical, Momentum::None, vec![], Node::unary(Unary::Identity, leaf(G))), "g"),
        "Momentum" => (genome(canonical, Momentum::Momentum, vec![], Node::unary(Unary::Identity, leaf(G))), "g with heavy-ball momentum"),
        "Nesterov" => (genome(canonical, Momentum::Nesterov, vec![], Node::unary(Unary::Identity, leaf(G))), "g with Nesterov momentum"),
        "QHM" => (genome(canonical, Momentum::None, vec![], Node::unary(Unary::Identity, leaf(QhmV))), "0.3g+0.7v̂"),
        "PowerSign-ld" => (
            genome(
                canonical,
                Momentum::None,
                vec![sign_product(), Node::unary(Unary::Exp, node(0).decayed(ld()))],
                Node::binary(Binary::Mul, node(1), leaf(G)),
            ),
            "e^(ld·sign(g)·sign(v̂))·g",
        ),
        "AddSign-ld" => (
            genome(
                canonical,
                Momentum::None,
                vec![sign_product(), Node::binary(Binary::Add, leaf(One), node(0).decayed(ld()))],
                Node::binary(Binary::Mul, node(1), leaf(G)),
            ),
            "(1 + ld·sign(g)·sign(v̂))·g",
        ),
        _ => unreachable!("every registry name is handled"),
    };
    Ok(CatalogEntry { name: canonical, genome, notes })
}

pub fn all() -> Vec<CatalogEntry> {
    names().into_iter().map(|n| build(n).expect("registry names build")).collect()
}

// ---------------------------------------------------------------------------
// Closed forms. Written directly from the formulas, without the graph
// interpreter, the op tables or the schedule module.

const EPS: f64 = 1e-8;

struct Sched {
    f: f64,
    r: f64,
}

impl Sched {
    fn new(c: Clock) -> Self {
        let t = c.t as f64;
        let big_t = c.total as f64;
        Sched { f: t / big_t, r: (2.0 * t).rem_euclid(big_t) / big_t }
    }
    fn ld(&self) -> f64 {
        1.0 - self.f
    }
    fn li(&self) -> f64 {
        self.f
    }
    fn lir(&self) -> f64 {
        self.r
    }
    fn ci(&self) -> f64 {
        0.5 * (1.0 - (self.f * std::f64::consts::PI).cos())
    }
    fn cir(&self) -> f64 {
        0.5 * (1.0 - (std::f64::consts::PI * self.r).cos())
    }
    fn cci(&self) -> f64 {
        0.5 * (1.0 - (2.0 * self.f * std::f64::consts::PI).cos())
    }
    fn ed(&self) -> f64 {
        0.01f64.powf(self.f)
    }
    fn dd(&self) -> f64 {
        let r = 1.0 - self.f;
        0.95 * r / (0.05 + 0.95 * r)
    }
}

fn softsign(x: f64) -> f64 {
    x / (1.0 + x.abs())
}

fn dtanh(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

fn clip(x: f64, b: f64) -> f64 {
    x.max(-b.abs()).min(b.abs())
}

fn qhm(g: f64, v: f64) -> f64 {
    0.3 * g + 0.7 * v
}

/// Closed-form update `U` for a catalog entry, or `None` for unknown names.
/// `state` must already contain this step's EMAs.
pub fn oracle_update(name: &str, g: &[f64], w: &[f64], state: &OptimizerState, clock: Clock) -> Option<Vec<f64>> {
    let s = Sched::new(clock);
    let t1_erfc = libm::erfc(libm::erfc(s.ci()));
    let t2_cir = dtanh(s.cir());
    let t3_dd = s.dd().atan();
    let t3_ci = dtanh(s.ci());
    let t_max = s.cci().max(s.lir());
    let t_ed = libm::erfc(s.ed());
    let t_dd_li = s.dd() * s.li();
    let ld = s.ld();

    let n = g.len();
    let per = |f: &dyn Fn(f64, f64, f64, f64, f64) -> f64| -> Vec<f64> {
        (0..n)
            .map(|i| f(g[i], w[i], state.v_hat[i], state.s_hat[i], state.lambda_hat[i]))
            .collect()
    };
    let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let a1 = |v: f64, sh: f64| clip(v, sh.sqrt());

    let out = match name {
        "Opt1" => per(&|g, w, v, sh, _| {
            let a = 1e-5 * w;
            qhm(g, v) + softsign(clip(a, a - (0.05 * g * g + 0.95 * sh)))
        }),
        "Opt2" => per(&|g, w, v, sh, _| {
            let a = 1e-5 * w;
            let d = a - (0.05 * g * g + 0.95 * sh);
            qhm(g, v) + softsign(a / (1.0 + d * d).sqrt())
        }),
        "Opt3" => per(&|g, w, v, _, l| {
            let a = 1e-5 * w;
            let d = a - (0.01 * g * g * g + 0.99 * l);
            qhm(g, v) + softsign(a / (1.0 + d * d).sqrt())
        }),
        "Opt4" => per(&|g, _, v, _, _| t1_erfc * qhm(g, v) / (t2_cir * clip(2.0, t3_dd * v.exp()) + EPS)),
        "Opt4_1" => per(&|g, _, v, _, _| qhm(g, v) / (clip(2.0, t3_dd * v.exp()) + EPS)),
        "Opt4_2" => per(&|g, _, v, _, _| qhm(g, v) / (clip(2.0, v.exp()) + EPS)),
        "Opt5" => per(&|g, _, v, _, _| t1_erfc * qhm(g, v) / (t2_cir * clip(2.0, v.exp()) + EPS)),
        "Opt6" => per(&|g, w, v, _, _| t1_erfc * qhm(g, v) / (t2_cir * (t3_ci * (1e-4 * w).exp()).abs() + EPS)),
        "Opt6_1" => per(&|g, w, v, _, _| qhm(g, v) / ((1e-4 * w).exp().abs() + EPS)),
        "Opt7" => per(&|g, _, v, _, _| (t_max * qhm(g, v).asinh()).tanh()),
        "Opt7_1" => per(&|g, _, v, _, _| qhm(g, v).asinh().tanh()),
        "Opt8" => per(&|g, _, v, _, _| (t_max * qhm(g, v).asinh()).asinh()),
        "Opt8_1" => per(&|g, _, v, _, _| qhm(g, v).asinh().asinh()),
        "Opt9" => per(&|g, _, _, sh, _| t_ed * g * (0.05 * g * g + 0.95 * sh).atan().exp()),
        "Opt9_1" => per(&|g, _, _, sh, _| g * (0.05 * g * g + 0.95 * sh).atan().exp()),
        "Opt10" => per(&|g, _, _, _, _| crate::ops::bessel_i1e(crate::ops::bessel_i1e(t_dd_li * g))),
        "Opt10_1" => per(&|g, _, _, _, _| crate::ops::bessel_i1e(crate::ops::bessel_i1e(g))),
        "A1" => per(&|_, _, v, sh, _| a1(v, sh)),
        "A2" => per(&|_, _, v, sh, _| clip(v, (sh.abs() + EPS).ln().abs())),
        "A3" => per(&|_, _, v, sh, _| clip(v, (sh.abs() + EPS).ln().abs().sqrt())),
        "A4" => per(&|_, _, v, sh, _| clip(v, 1.0 / (1.0 + (-sh).exp()))),
        "A5" => {
            let raw = per(&|_, _, v, sh, _| a1(v, sh));
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            raw.iter().map(|x| x / (norm + EPS)).collect()
        }
        "Adam" => per(&|_, _, v, sh, _| v / (sh.sqrt() + EPS)),
        "RMSProp" => per(&|g, _, _, sh, _| g / (sh.sqrt() + EPS)),
        "SGD" | "Momentum" | "Nesterov" => g.to_vec(),
        "QHM" => per(&|g, _, v, _, _| qhm(g, v)),
        "PowerSign-ld" => per(&|g, _, v, _, _| (ld * sign(g) * sign(v)).exp() * g),
        "AddSign-ld" => per(&|g, _, v, _, _| (1.0 + ld * sign(g) * sign(v)) * g),
        _ => return None,
    };
    Some(out)
}
