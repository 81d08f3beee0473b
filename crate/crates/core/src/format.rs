//! Canonical text form of genomes and the human-readable formula printer.
//!
//! The canonical form is a single-line JSON object:
//!
//! ```text
//! {"uid":"…","momentum":"none","lineage":null,
//!  "nodes":[{"id":0,"op":"sqrt_abs","inputs":["s_hat"],"decays":[null]}],
//!  "output":{"op":"div","inputs":["v_hat","h0"],"decays":[null,null]}}
//! ```
//!
//! Inputs name either an operand (or, inside decay graphs, a schedule) or an
//! earlier hidden node as `h<index>`. Decay graphs use the same node/output
//! layout without a `decays` field.

use std::fmt;
use std::marker::PhantomData;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::graph::{
    DecayGraph, Graph, Input, Leaf, Lineage, Momentum, MutationKind, Node, NodeRef, OptimizerGenome, Source,
};
use crate::operands::OperandId;
use crate::ops::{Binary, Op, StateUnary, Unary};
use crate::schedules::ScheduleId;
use crate::Error;

struct OpWire(Op);

impl Serialize for OpWire {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.name())
    }
}

impl<'de> Deserialize<'de> for OpWire {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Op::from_name(&name)
            .map(OpWire)
            .ok_or_else(|| de::Error::custom(format!("unknown op `{name}`")))
    }
}

struct SourceWire<L>(Source<L>);

impl<L: Leaf> Serialize for SourceWire<L> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Source::Leaf(l) => s.serialize_str(l.name()),
            Source::Node(i) => s.serialize_str(&format!("h{i}")),
        }
    }
}

struct SourceVisitor<L>(PhantomData<L>);

impl<L: Leaf> Visitor<'_> for SourceVisitor<L> {
    type Value = SourceWire<L>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an operand name or a hidden node reference `h<n>`")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        if let Some(l) = L::from_name(v) {
            return Ok(SourceWire(Source::Leaf(l)));
        }
        if let Some(idx) = v.strip_prefix('h').and_then(|n| n.parse::<usize>().ok()) {
            return Ok(SourceWire(Source::Node(idx)));
        }
        Err(E::custom(format!("unknown input `{v}`")))
    }
}

impl<'de, L: Leaf> Deserialize<'de> for SourceWire<L> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_str(SourceVisitor(PhantomData))
    }
}

struct NamedWire<T>(T);

macro_rules! named_wire {
    ($t:ty, $what:literal) => {
        impl Serialize for NamedWire<$t> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.0.name())
            }
        }
        impl<'de> Deserialize<'de> for NamedWire<$t> {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let name = String::deserialize(d)?;
                <$t>::from_name(&name)
                    .map(NamedWire)
                    .ok_or_else(|| de::Error::custom(format!(concat!("unknown ", $what, " `{}`"), name)))
            }
        }
    };
}

named_wire!(Momentum, "momentum type");
named_wire!(MutationKind, "mutation kind");

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineageWire {
    parent: String,
    mutation: NamedWire<MutationKind>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "L: Leaf", deserialize = "L: Leaf"))]
struct NodeWire<L> {
    id: usize,
    op: OpWire,
    inputs: Vec<SourceWire<L>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decays: Option<Vec<Option<DecayWire>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "L: Leaf", deserialize = "L: Leaf"))]
struct OutputWire<L> {
    op: OpWire,
    inputs: Vec<SourceWire<L>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decays: Option<Vec<Option<DecayWire>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecayWire {
    nodes: Vec<NodeWire<ScheduleId>>,
    output: OutputWire<ScheduleId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenomeWire {
    uid: String,
    momentum: NamedWire<Momentum>,
    #[serde(default)]
    lineage: Option<LineageWire>,
    nodes: Vec<NodeWire<OperandId>>,
    output: OutputWire<OperandId>,
}

fn node_to_wire<L: Leaf>(node: &Node<L>, with_decays: bool) -> (OpWire, Vec<SourceWire<L>>, Option<Vec<Option<DecayWire>>>) {
    let inputs = node.inputs.iter().map(|i| SourceWire(i.source)).collect();
    let decays = with_decays.then(|| {
        node.inputs
            .iter()
            .map(|i| i.decay.as_ref().map(|dg| decay_to_wire(dg)))
            .collect()
    });
    (OpWire(node.op), inputs, decays)
}

fn graph_to_wire<L: Leaf>(g: &Graph<L>) -> (Vec<NodeWire<L>>, OutputWire<L>) {
    let with_decays = L::allows_edge_decay();
    let nodes = g
        .hidden
        .iter()
        .enumerate()
        .map(|(id, n)| {
            let (op, inputs, decays) = node_to_wire(n, with_decays);
            NodeWire { id, op, inputs, decays }
        })
        .collect();
    let (op, inputs, decays) = node_to_wire(&g.output, with_decays);
    (nodes, OutputWire { op, inputs, decays })
}

fn decay_to_wire(dg: &DecayGraph) -> DecayWire {
    let (nodes, output) = graph_to_wire(dg);
    DecayWire { nodes, output }
}

fn node_from_wire<L: Leaf>(
    label: &str,
    op: OpWire,
    inputs: Vec<SourceWire<L>>,
    decays: Option<Vec<Option<DecayWire>>>,
) -> Result<Node<L>, Error> {
    let decays: Vec<Option<DecayWire>> = match decays {
        None => inputs.iter().map(|_| None).collect(),
        Some(d) if d.len() == inputs.len() => d,
        Some(d) => {
            return Err(Error::Parse(format!(
                "{label}: {} decay entries for {} inputs",
                d.len(),
                inputs.len()
            )))
        }
    };
    let inputs = inputs
        .into_iter()
        .zip(decays)
        .map(|(s, d)| {
            let decay = d.map(|w| decay_from_wire(w).map(Box::new)).transpose()?;
            Ok(Input { source: s.0, decay })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Node { op: op.0, inputs })
}

fn graph_from_wire<L: Leaf>(nodes: Vec<NodeWire<L>>, output: OutputWire<L>) -> Result<Graph<L>, Error> {
    let mut hidden = Vec::with_capacity(nodes.len());
    for (pos, n) in nodes.into_iter().enumerate() {
        if n.id != pos {
            return Err(Error::Parse(format!("node at position {pos} has id {}", n.id)));
        }
        hidden.push(node_from_wire(&NodeRef::Hidden(pos).label(), n.op, n.inputs, n.decays)?);
    }
    let output = node_from_wire("out", output.op, output.inputs, output.decays)?;
    Ok(Graph { hidden, output })
}

fn decay_from_wire(w: DecayWire) -> Result<DecayGraph, Error> {
    graph_from_wire(w.nodes, w.output)
}

/// Canonical single-line text of a genome.
pub fn serialize(genome: &OptimizerGenome) -> String {
    let (nodes, output) = graph_to_wire(&genome.graph);
    let wire = GenomeWire {
        uid: genome.uid.clone(),
        momentum: NamedWire(genome.momentum),
        lineage: genome.lineage.as_ref().map(|l| LineageWire {
            parent: l.parent.clone(),
            mutation: NamedWire(l.mutation),
        }),
        nodes,
        output,
    };
    serde_json::to_string(&wire).expect("genome wire types always serialize")
}

/// Parses canonical text (any JSON whitespace is accepted) and validates the
/// resulting graph.
pub fn deserialize(text: &str) -> Result<OptimizerGenome, Error> {
    let wire: GenomeWire = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let graph = graph_from_wire(wire.nodes, wire.output)?;
    let genome = OptimizerGenome {
        uid: wire.uid,
        momentum: wire.momentum.0,
        graph,
        lineage: wire.lineage.map(|l| Lineage { parent: l.parent, mutation: l.mutation.0 }),
    };
    genome.validate()?;
    Ok(genome)
}

/// Serde adapter embedding a genome as its canonical JSON object, for use
/// with `#[serde(with = "crate::format::genome_serde")]`.
pub mod genome_serde {
    use super::*;

    pub fn serialize<S: Serializer>(g: &OptimizerGenome, s: S) -> Result<S::Ok, S::Error> {
        let v: serde_json::Value = serde_json::from_str(&super::serialize(g)).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<OptimizerGenome, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        super::deserialize(&v.to_string()).map_err(de::Error::custom)
    }
}

/// Same as [`genome_serde`] for optional genomes.
pub mod opt_genome_serde {
    use super::*;

    pub fn serialize<S: Serializer>(g: &Option<OptimizerGenome>, s: S) -> Result<S::Ok, S::Error> {
        match g {
            Some(g) => super::genome_serde::serialize(g, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<OptimizerGenome>, D::Error> {
        let v = Option::<serde_json::Value>::deserialize(d)?;
        v.map(|v| super::deserialize(&v.to_string()).map_err(de::Error::custom)).transpose()
    }
}

/// Canonical text of a lone decay graph.
pub fn serialize_decay(dg: &DecayGraph) -> String {
    serde_json::to_string(&decay_to_wire(dg)).expect("decay wire types always serialize")
}

pub fn deserialize_decay(text: &str) -> Result<DecayGraph, Error> {
    let wire: DecayWire = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let dg = decay_from_wire(wire)?;
    dg.validate()?;
    Ok(dg)
}

fn wrap_unary(name: &str, x: &str) -> String {
    format!("{name}({x})")
}

fn render_op(op: Op, args: &[String]) -> String {
    let x = || args[0].as_str();
    match op {
        Op::Unary(u) => match u {
            Unary::Identity => args[0].clone(),
            Unary::Neg => format!("-{}", x()),
            Unary::LnAbs => format!("ln(|{}|+eps)", x()),
            Unary::SqrtAbs => format!("sqrt(|{}|)", x()),
            Unary::Exp => format!("exp({})", x()),
            Unary::Abs => format!("|{}|", x()),
            Unary::SigmoidGrad => wrap_unary("sigmoid'", x()),
            Unary::SoftsignGrad => wrap_unary("softsign'", x()),
            Unary::TanhGrad => wrap_unary("tanh'", x()),
            Unary::MaxZero => format!("max({}, 0)", x()),
            Unary::MinZero => format!("min({}, 0)", x()),
            Unary::Drop50 => format!("drop({}, 0.5)", x()),
            Unary::Drop30 => format!("drop({}, 0.3)", x()),
            Unary::Drop10 => format!("drop({}, 0.1)", x()),
            Unary::Square => format!("({})^2", x()),
            Unary::Sqrt => format!("sqrt({})", x()),
            other => wrap_unary(other.name(), x()),
        },
        Op::Binary(b) => {
            let (a, c) = (&args[0], &args[1]);
            match b {
                Binary::Add => format!("({a} + {c})"),
                Binary::Sub => format!("({a} - {c})"),
                Binary::Mul => format!("{a}*{c}"),
                Binary::Div => format!("({a} / {c})"),
                Binary::DivSqrt1p => format!("({a} / sqrt(1 + ({c})^2))"),
                Binary::Max => format!("max({a}, {c})"),
                Binary::Min => format!("min({a}, {c})"),
                Binary::Mix95 => format!("(0.95*{a} + 0.05*{c})"),
                Binary::Clip => format!("clip({a}, ±|{c}|)"),
                Binary::PowAbs => format!("|{a}|^({c})"),
            }
        }
        Op::State(s) => match s {
            StateUnary::Ema95 => format!("ema95[{}]", x()),
            StateUnary::Diff => format!("diff[{}]", x()),
            StateUnary::RunMax => format!("runmax[{}]", x()),
        },
    }
}

struct Printer {
    legend: Vec<String>,
}

impl Printer {
    fn render<L: Leaf>(&mut self, g: &Graph<L>, r: NodeRef) -> String {
        let node = g.node(r);
        let args: Vec<String> = node
            .inputs
            .iter()
            .map(|inp| {
                let base = match inp.source {
                    Source::Leaf(l) => l.symbol().to_string(),
                    Source::Node(j) => self.render(g, NodeRef::Hidden(j)),
                };
                match &inp.decay {
                    Some(dg) => {
                        let k = self.legend.len() + 1;
                        self.legend.push(String::new());
                        let expr = render_graph(dg);
                        self.legend[k - 1] = format!("t_{k} = {expr}");
                        format!("t_{k}*{base}")
                    }
                    None => base,
                }
            })
            .collect();
        render_op(node.op, &args)
    }
}

fn strip_outer(s: String) -> String {
    if s.starts_with('(') && s.ends_with(')') {
        // Only strip when the outer parentheses enclose the whole string.
        let mut depth = 0i32;
        for (i, c) in s.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 && i + 1 < s.len() {
                        return s;
                    }
                }
                _ => {}
            }
        }
        s[1..s.len() - 1].to_string()
    } else {
        s
    }
}

/// Infix rendering of a graph's active subgraph (decay graphs inline).
pub fn render_graph<L: Leaf>(g: &Graph<L>) -> String {
    let mut p = Printer { legend: vec![] };
    strip_outer(p.render(g, NodeRef::Output))
}

/// Formula for the active update graph, followed by a momentum line when
/// momentum is used and one `t_k = …` legend line per decayed connection.
pub fn pretty_print(genome: &OptimizerGenome) -> String {
    let mut p = Printer { legend: vec![] };
    let mut out = strip_outer(p.render(&genome.graph, NodeRef::Output));
    if genome.momentum != Momentum::None {
        out.push_str("\nmomentum: ");
        out.push_str(genome.momentum.name());
    }
    for line in p.legend {
        out.push('\n');
        out.push_str(&line);
    }
    out
}
