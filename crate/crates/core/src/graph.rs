//! Computational-graph genome: update graphs over operands, decay graphs over
//! schedules, and the optimizer genome that ties them to a momentum type.
//!
//! Hidden node `i` may only read leaves or hidden nodes `j < i`; the output
//! node may read any hidden node. Acyclicity is therefore structural.

use std::collections::BTreeSet;
use std::fmt::Debug;
use std::hash::Hash;

use thiserror::Error;

use crate::operands::{OperandId, OPERANDS};
use crate::ops::{self, Op};
use crate::schedules::{ScheduleId, SCHEDULES};

/// Leaf alphabet of a graph, plus which operations the graph may use.
pub trait Leaf: Copy + Eq + Ord + Hash + Debug + Send + Sync + 'static {
    fn leaves() -> &'static [Self];
    fn name(self) -> &'static str;
    fn symbol(self) -> &'static str;
    fn from_name(name: &str) -> Option<Self>;
    /// Operations drawn during random initialization and mutation.
    fn search_ops() -> Vec<Op>;
    /// Operations accepted by validation.
    fn accepts(op: Op) -> bool;
    /// Whether input connections may carry decay graphs.
    fn allows_edge_decay() -> bool;
}

impl Leaf for OperandId {
    fn leaves() -> &'static [Self] {
        &OPERANDS
    }
    fn name(self) -> &'static str {
        OperandId::name(self)
    }
    fn symbol(self) -> &'static str {
        OperandId::symbol(self)
    }
    fn from_name(name: &str) -> Option<Self> {
        OperandId::from_name(name)
    }
    fn search_ops() -> Vec<Op> {
        ops::update_search_ops()
    }
    fn accepts(_op: Op) -> bool {
        true
    }
    fn allows_edge_decay() -> bool {
        true
    }
}

impl Leaf for ScheduleId {
    fn leaves() -> &'static [Self] {
        &SCHEDULES
    }
    fn name(self) -> &'static str {
        ScheduleId::name(self)
    }
    fn symbol(self) -> &'static str {
        ScheduleId::name(self)
    }
    fn from_name(name: &str) -> Option<Self> {
        ScheduleId::from_name(name)
    }
    fn search_ops() -> Vec<Op> {
        ops::decay_search_ops()
    }
    fn accepts(op: Op) -> bool {
        match op {
            Op::Unary(u) => ops::DECAY_UNARY.contains(&u),
            Op::Binary(_) => true,
            Op::State(_) => false,
        }
    }
    fn allows_edge_decay() -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source<L> {
    Leaf(L),
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Input<L> {
    pub source: Source<L>,
    pub decay: Option<Box<DecayGraph>>,
}

impl<L> Input<L> {
    pub fn leaf(l: L) -> Self {
        Input { source: Source::Leaf(l), decay: None }
    }

    pub fn node(i: usize) -> Self {
        Input { source: Source::Node(i), decay: None }
    }

    pub fn decayed(mut self, dg: DecayGraph) -> Self {
        self.decay = Some(Box::new(dg));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node<L> {
    pub op: Op,
    pub inputs: Vec<Input<L>>,
}

impl<L> Node<L> {
    pub fn new(op: Op, inputs: Vec<Input<L>>) -> Self {
        Node { op, inputs }
    }

    pub fn unary(op: ops::Unary, x: Input<L>) -> Self {
        Node { op: Op::Unary(op), inputs: vec![x] }
    }

    pub fn binary(op: ops::Binary, a: Input<L>, b: Input<L>) -> Self {
        Node { op: Op::Binary(op), inputs: vec![a, b] }
    }

    pub fn state(op: ops::StateUnary, x: Input<L>) -> Self {
        Node { op: Op::State(op), inputs: vec![x] }
    }
}

/// Node position: hidden index or the designated output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    Hidden(usize),
    Output,
}

impl NodeRef {
    pub fn label(self) -> String {
        match self {
            NodeRef::Hidden(i) => format!("h{i}"),
            NodeRef::Output => "out".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph<L> {
    pub hidden: Vec<Node<L>>,
    pub output: Node<L>,
}

pub type OptimizerGraph = Graph<OperandId>;
pub type DecayGraph = Graph<ScheduleId>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("{node}: op `{op}` expects {expected} input(s), found {found}")]
    Arity { node: String, op: &'static str, expected: usize, found: usize },
    #[error("{node}: op `{op}` is not allowed in this graph")]
    OpNotAllowed { node: String, op: &'static str },
    #[error("{node} input {slot}: reference to h{target} is not an earlier node")]
    ForwardReference { node: String, slot: usize, target: usize },
    #[error("{node} input {slot}: decay graphs cannot be nested")]
    NestedDecay { node: String, slot: usize },
    #[error("{node} input {slot} decay: {source}")]
    Decay { node: String, slot: usize, source: Box<GraphError> },
}

impl<L: Leaf> Graph<L> {
    pub fn node(&self, r: NodeRef) -> &Node<L> {
        match r {
            NodeRef::Hidden(i) => &self.hidden[i],
            NodeRef::Output => &self.output,
        }
    }

    pub fn node_mut(&mut self, r: NodeRef) -> &mut Node<L> {
        match r {
            NodeRef::Hidden(i) => &mut self.hidden[i],
            NodeRef::Output => &mut self.output,
        }
    }

    /// Sources a node at `r` may legally read.
    pub fn legal_sources(&self, r: NodeRef) -> Vec<Source<L>> {
        let limit = match r {
            NodeRef::Hidden(i) => i,
            NodeRef::Output => self.hidden.len(),
        };
        L::leaves()
            .iter()
            .map(|&l| Source::Leaf(l))
            .chain((0..limit).map(Source::Node))
            .collect()
    }

    /// Hidden-node activity flags: `true` when the output depends on the node.
    pub fn active_hidden(&self) -> Vec<bool> {
        let mut active = vec![false; self.hidden.len()];
        let mark = |node: &Node<L>, active: &mut Vec<bool>| {
            for inp in &node.inputs {
                if let Source::Node(j) = inp.source {
                    active[j] = true;
                }
            }
        };
        mark(&self.output, &mut active);
        for i in (0..self.hidden.len()).rev() {
            if active[i] {
                mark(&self.hidden[i], &mut active);
            }
        }
        active
    }

    /// Nodes from which the output node is reachable, output included.
    pub fn resolve_active(&self) -> BTreeSet<NodeRef> {
        self.active_hidden()
            .into_iter()
            .enumerate()
            .filter(|&(_, a)| a)
            .map(|(i, _)| NodeRef::Hidden(i))
            .chain(std::iter::once(NodeRef::Output))
            .collect()
    }

    pub fn node_refs(&self) -> impl Iterator<Item = NodeRef> {
        (0..self.hidden.len()).map(NodeRef::Hidden).chain(std::iter::once(NodeRef::Output))
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for r in self.node_refs() {
            let node = self.node(r);
            let label = r.label();
            if !L::accepts(node.op) {
                return Err(GraphError::OpNotAllowed { node: label, op: node.op.name() });
            }
            if node.inputs.len() != node.op.arity() {
                return Err(GraphError::Arity {
                    node: label,
                    op: node.op.name(),
                    expected: node.op.arity(),
                    found: node.inputs.len(),
                });
            }
            let limit = match r {
                NodeRef::Hidden(i) => i,
                NodeRef::Output => self.hidden.len(),
            };
            for (slot, inp) in node.inputs.iter().enumerate() {
                if let Source::Node(j) = inp.source {
                    if j >= limit {
                        return Err(GraphError::ForwardReference { node: label, slot, target: j });
                    }
                }
                if let Some(dg) = &inp.decay {
                    if !L::allows_edge_decay() {
                        return Err(GraphError::NestedDecay { node: label, slot });
                    }
                    dg.validate().map_err(|e| GraphError::Decay {
                        node: label.clone(),
                        slot,
                        source: Box::new(e),
                    })?;
                }
            }
        }
        Ok(())
    }

    /// All decay graphs attached to input connections, in node/slot order.
    pub fn decays(&self) -> Vec<(NodeRef, usize, &DecayGraph)> {
        let mut out = Vec::new();
        for r in self.node_refs() {
            for (slot, inp) in self.node(r).inputs.iter().enumerate() {
                if let Some(dg) = &inp.decay {
                    out.push((r, slot, dg.as_ref()));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.node_refs().map(|r| self.node(r).inputs.len()).sum()
    }

    /// Copy with every inactive hidden node removed and references renumbered.
    pub fn without_inactive(&self) -> Self {
        let active = self.active_hidden();
        let mut remap = vec![usize::MAX; self.hidden.len()];
        let mut next = 0;
        for (i, &a) in active.iter().enumerate() {
            if a {
                remap[i] = next;
                next += 1;
            }
        }
        let fix = |node: &Node<L>| {
            let mut n = node.clone();
            for inp in &mut n.inputs {
                if let Source::Node(j) = inp.source {
                    inp.source = Source::Node(remap[j]);
                }
            }
            n
        };
        Graph {
            hidden: self
                .hidden
                .iter()
                .zip(&active)
                .filter(|(_, &a)| a)
                .map(|(n, _)| fix(n))
                .collect(),
            output: fix(&self.output),
        }
    }

    /// Appends inactive filler nodes until there are at least `count` hidden
    /// nodes. Fillers read the first leaf through the identity op.
    pub fn padded(mut self, count: usize) -> Self {
        while self.hidden.len() < count {
            self.hidden.push(Node::unary(ops::Unary::Identity, Input::leaf(L::leaves()[0])));
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Momentum {
    None,
    Momentum,
    Nesterov,
}

pub const MOMENTA: [Momentum; 3] = [Momentum::None, Momentum::Momentum, Momentum::Nesterov];

impl Momentum {
    pub fn name(self) -> &'static str {
        match self {
            Momentum::None => "none",
            Momentum::Momentum => "momentum",
            Momentum::Nesterov => "nesterov",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        MOMENTA.iter().copied().find(|m| m.name() == name)
    }
}

/// Which of the six mutation classes produced a genome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MutationKind {
    Operation,
    Connection,
    Arity,
    Swap,
    Momentum,
    DecayCreate,
    DecayDelete,
    DecayMutate,
}

pub const MUTATION_KINDS: [MutationKind; 8] = [
    MutationKind::Operation,
    MutationKind::Connection,
    MutationKind::Arity,
    MutationKind::Swap,
    MutationKind::Momentum,
    MutationKind::DecayCreate,
    MutationKind::DecayDelete,
    MutationKind::DecayMutate,
];

impl MutationKind {
    pub fn name(self) -> &'static str {
        match self {
            MutationKind::Operation => "operation",
            MutationKind::Connection => "connection",
            MutationKind::Arity => "arity",
            MutationKind::Swap => "swap",
            MutationKind::Momentum => "momentum",
            MutationKind::DecayCreate => "decay_create",
            MutationKind::DecayDelete => "decay_delete",
            MutationKind::DecayMutate => "decay_mutate",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        MUTATION_KINDS.iter().copied().find(|m| m.name() == name)
    }

    /// Mutation class number, 1 through 6.
    pub fn class(self) -> u8 {
        match self {
            MutationKind::Operation => 1,
            MutationKind::Connection => 2,
            MutationKind::Arity => 3,
            MutationKind::Swap => 4,
            MutationKind::Momentum => 5,
            MutationKind::DecayCreate | MutationKind::DecayDelete | MutationKind::DecayMutate => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lineage {
    pub parent: String,
    pub mutation: MutationKind,
}

/// The unit of search: an update graph, its momentum wrapper and the decay
/// graphs carried on its connections.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerGenome {
    pub uid: String,
    pub momentum: Momentum,
    pub graph: OptimizerGraph,
    pub lineage: Option<Lineage>,
}

impl OptimizerGenome {
    pub fn new(uid: impl Into<String>, momentum: Momentum, graph: OptimizerGraph) -> Self {
        OptimizerGenome { uid: uid.into(), momentum, graph, lineage: None }
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        self.graph.validate()
    }

    /// Number of state-saving nodes (each owns one register per element).
    pub fn state_node_count(&self) -> usize {
        self.graph.node_refs().filter(|&r| self.graph.node(r).op.is_stateful()).count()
    }
}

/// Renders a 64-bit value as a genome uid.
pub fn format_uid(x: u64) -> String {
    format!("{x:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{Binary, Unary};
    use OperandId::*;

    fn chain_graph() -> OptimizerGraph {
        // h0 = |g|, h1 = -h0, h2, h3 orphans, out = identity(h1)
        Graph {
            hidden: vec![
                Node::unary(Unary::Abs, Input::leaf(G)),
                Node::unary(Unary::Neg, Input::node(0)),
                Node::binary(Binary::Add, Input::leaf(G), Input::leaf(VHat)),
                Node::unary(Unary::Exp, Input::node(2)),
            ],
            output: Node::unary(Unary::Identity, Input::node(1)),
        }
    }

    #[test]
    fn chain_active_set() {
        let g = chain_graph();
        let active = g.resolve_active();
        let expected: BTreeSet<_> =
            [NodeRef::Hidden(0), NodeRef::Hidden(1), NodeRef::Output].into_iter().collect();
        assert_eq!(active, expected);
    }

    #[test]
    fn output_only_dependency() {
        let mut g = chain_graph();
        g.output = Node::unary(Unary::Identity, Input::node(2));
        let expected: BTreeSet<_> = [NodeRef::Hidden(2), NodeRef::Output].into_iter().collect();
        assert_eq!(g.resolve_active(), expected);

        g.output = Node::unary(Unary::Identity, Input::leaf(G));
        let expected: BTreeSet<_> = [NodeRef::Output].into_iter().collect();
        assert_eq!(g.resolve_active(), expected);
    }

    #[test]
    fn validation_rejects_forward_reference() {
        let mut g = chain_graph();
        g.hidden[1].inputs[0] = Input::node(3);
        assert!(matches!(g.validate(), Err(GraphError::ForwardReference { target: 3, .. })));
        let mut g = chain_graph();
        g.hidden[0].inputs[0] = Input::node(0);
        assert!(g.validate().is_err());
    }

    #[test]
    fn validation_rejects_bad_arity_and_ops() {
        let mut g = chain_graph();
        g.hidden[0].inputs.push(Input::leaf(G));
        assert!(matches!(g.validate(), Err(GraphError::Arity { .. })));

        let dg: DecayGraph = Graph {
            hidden: vec![],
            output: Node::unary(Unary::Exp, Input::leaf(ScheduleId::Ld)),
        };
        assert!(matches!(dg.validate(), Err(GraphError::OpNotAllowed { .. })));
    }

    #[test]
    fn pruning_keeps_active_structure() {
        let g = chain_graph();
        let p = g.without_inactive();
        assert_eq!(p.hidden.len(), 2);
        assert!(p.validate().is_ok());
        assert_eq!(p.resolve_active().len(), 3);
    }
}
