//! Random initialization and the six-way mutation operator.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{
    format_uid, DecayGraph, Graph, Input, Leaf, Lineage, Momentum, MutationKind, Node, NodeRef,
    OptimizerGenome, Source, MOMENTA,
};
use crate::integrity::decay_range_check;
use crate::ops::Op;
use crate::schedules::ScheduleId;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub hidden_nodes: usize,
    pub decay_hidden_nodes: usize,
    /// Probability that an input connection carries a decay graph.
    pub p_decay: f64,
    /// Grid size used by the decay range check.
    pub decay_grid: u64,
    /// Re-sampling attempts per decay graph before giving up.
    pub decay_attempts: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            hidden_nodes: 4,
            decay_hidden_nodes: 1,
            p_decay: 0.2,
            decay_grid: 1000,
            decay_attempts: 1000,
        }
    }
}

/// Restricts which mutation classes may be drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MutationMask {
    #[default]
    Full,
    /// Only decay-graph edits; the update equation itself is frozen.
    DecayOnly,
}

fn random_node<L: Leaf, R: Rng + ?Sized>(
    graph_len: usize,
    position: NodeRef,
    ops: &[Op],
    rng: &mut R,
    mut decay: impl FnMut(&mut R) -> Result<Option<DecayGraph>, Error>,
) -> Result<Node<L>, Error> {
    let op = *ops.choose(rng).expect("op set is nonempty");
    let limit = match position {
        NodeRef::Hidden(i) => i,
        NodeRef::Output => graph_len,
    };
    let leaves = L::leaves();
    let mut inputs = Vec::with_capacity(op.arity());
    for _ in 0..op.arity() {
        let k = rng.gen_range(0..leaves.len() + limit);
        let source = if k < leaves.len() { Source::Leaf(leaves[k]) } else { Source::Node(k - leaves.len()) };
        let decay = decay(rng)?.map(Box::new);
        inputs.push(Input { source, decay });
    }
    Ok(Node { op, inputs })
}

fn random_graph<L: Leaf, R: Rng + ?Sized>(
    hidden: usize,
    rng: &mut R,
    mut decay: impl FnMut(&mut R) -> Result<Option<DecayGraph>, Error>,
) -> Result<Graph<L>, Error> {
    let ops = L::search_ops();
    let mut nodes = Vec::with_capacity(hidden);
    for i in 0..hidden {
        nodes.push(random_node(hidden, NodeRef::Hidden(i), &ops, rng, &mut decay)?);
    }
    let output = random_node(hidden, NodeRef::Output, &ops, rng, &mut decay)?;
    Ok(Graph { hidden: nodes, output })
}

/// Samples decay graphs until one stays inside `[0, 1]` over the grid.
pub fn random_decay_graph<R: Rng + ?Sized>(rng: &mut R, cfg: &InitConfig) -> Result<DecayGraph, Error> {
    for _ in 0..cfg.decay_attempts {
        let dg: DecayGraph = random_graph(cfg.decay_hidden_nodes, rng, |_| Ok(None))?;
        if decay_range_check(&dg, cfg.decay_grid) {
            return Ok(dg);
        }
    }
    Err(Error::DecayAttempts(cfg.decay_attempts))
}

/// Random genome: `hidden_nodes` hidden nodes plus an output node, ops and
/// connections drawn uniformly, each connection decayed with probability
/// `p_decay`.
pub fn random_init<R: Rng + ?Sized>(rng: &mut R, cfg: &InitConfig) -> Result<OptimizerGenome, Error> {
    let uid = format_uid(rng.gen());
    let graph = random_graph(cfg.hidden_nodes, rng, |rng| {
        if rng.gen_bool(cfg.p_decay.clamp(0.0, 1.0)) {
            random_decay_graph(rng, cfg).map(Some)
        } else {
            Ok(None)
        }
    })?;
    let momentum = *MOMENTA.choose(rng).expect("three momentum types");
    Ok(OptimizerGenome { uid, momentum, graph, lineage: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Operation,
    Connection,
    Arity,
    Swap,
    Momentum,
    Decay,
}

fn swap_applicable<L: Leaf>(node: &Node<L>) -> bool {
    node.inputs.len() == 2 && node.inputs[0] != node.inputs[1]
}

/// Mutation classes 1 to 4 on `target`; shared by update and decay graphs.
fn mutate_structure<L: Leaf, R: Rng + ?Sized>(graph: &mut Graph<L>, target: NodeRef, class: Class, rng: &mut R) {
    let sources = graph.legal_sources(target);
    let search_ops = L::search_ops();
    let node = graph.node_mut(target);
    match class {
        Class::Operation => {
            let pool: Vec<Op> = search_ops
                .iter()
                .copied()
                .filter(|op| op.arity() == node.op.arity() && *op != node.op)
                .collect();
            node.op = *pool.choose(rng).expect("each arity has several ops");
        }
        Class::Connection => {
            let slot = rng.gen_range(0..node.inputs.len());
            let current = node.inputs[slot].source;
            let pool: Vec<Source<L>> = sources.into_iter().filter(|s| *s != current).collect();
            node.inputs[slot].source = *pool.choose(rng).expect("more than one legal source");
        }
        Class::Arity => {
            if node.op.arity() == 1 {
                let pool: Vec<Op> = search_ops.iter().copied().filter(|op| op.arity() == 2).collect();
                node.op = *pool.choose(rng).expect("binary ops exist");
                let source = *sources.choose(rng).expect("legal sources exist");
                node.inputs.push(Input { source, decay: None });
            } else {
                let pool: Vec<Op> = search_ops.iter().copied().filter(|op| op.arity() == 1).collect();
                node.op = *pool.choose(rng).expect("unary ops exist");
                let drop = rng.gen_range(0..2);
                node.inputs.remove(drop);
            }
        }
        Class::Swap => node.inputs.swap(0, 1),
        Class::Momentum | Class::Decay => unreachable!("not a structural mutation"),
    }
}

fn structural_classes<L: Leaf>(node: &Node<L>) -> Vec<Class> {
    let mut classes = vec![Class::Operation, Class::Connection, Class::Arity];
    if swap_applicable(node) {
        classes.push(Class::Swap);
    }
    classes
}

/// One structural mutation (classes 1 to 4) of a decay graph, re-drawn until
/// the result passes the range check. `None` if every attempt failed.
fn mutate_decay_graph<R: Rng + ?Sized>(dg: &DecayGraph, rng: &mut R, cfg: &InitConfig) -> Option<DecayGraph> {
    for _ in 0..cfg.decay_attempts {
        let mut child = dg.clone();
        let active: Vec<NodeRef> = child.resolve_active().into_iter().collect();
        let target = *active.choose(rng).expect("output is always active");
        let classes = structural_classes(child.node(target));
        let class = *classes.choose(rng).expect("nonempty");
        mutate_structure(&mut child, target, class, rng);
        if decay_range_check(&child, cfg.decay_grid) {
            return Some(child);
        }
    }
    None
}

fn fresh_decay<R: Rng + ?Sized>(rng: &mut R, cfg: &InitConfig) -> DecayGraph {
    random_decay_graph(rng, cfg).unwrap_or_else(|_| {
        // Identity over a schedule always lies in [0, 1].
        let s = *crate::schedules::SCHEDULES.choose(rng).expect("14 schedules");
        Graph {
            hidden: vec![],
            output: Node::unary(crate::ops::Unary::Identity, Input::leaf(s)),
        }
        .padded(cfg.decay_hidden_nodes)
    })
}

/// Mutates with the default configuration (full mask, default init config).
pub fn mutate<R: Rng + ?Sized>(genome: &OptimizerGenome, rng: &mut R) -> OptimizerGenome {
    mutate_with(genome, rng, MutationMask::Full, &InitConfig::default())
}

/// Returns a child that differs from `genome` by exactly one mutation. A
/// random active node is chosen, then a mutation class drawn uniformly from
/// those applicable to it.
pub fn mutate_with<R: Rng + ?Sized>(
    genome: &OptimizerGenome,
    rng: &mut R,
    mask: MutationMask,
    cfg: &InitConfig,
) -> OptimizerGenome {
    let uid = format_uid(rng.gen());
    let mut child = genome.clone();
    child.uid = uid;

    let active: Vec<NodeRef> = child.graph.resolve_active().into_iter().collect();
    let target = *active.choose(rng).expect("output is always active");
    let classes = match mask {
        MutationMask::Full => {
            let mut c = structural_classes(child.graph.node(target));
            c.push(Class::Momentum);
            c.push(Class::Decay);
            c
        }
        MutationMask::DecayOnly => vec![Class::Decay],
    };
    let class = *classes.choose(rng).expect("nonempty");

    let kind = match class {
        Class::Operation | Class::Connection | Class::Arity | Class::Swap => {
            mutate_structure(&mut child.graph, target, class, rng);
            match class {
                Class::Operation => MutationKind::Operation,
                Class::Connection => MutationKind::Connection,
                Class::Arity => MutationKind::Arity,
                _ => MutationKind::Swap,
            }
        }
        Class::Momentum => {
            let pool: Vec<Momentum> = MOMENTA.iter().copied().filter(|&m| m != child.momentum).collect();
            child.momentum = *pool.choose(rng).expect("two alternatives");
            MutationKind::Momentum
        }
        Class::Decay => {
            let node = child.graph.node_mut(target);
            let slot = rng.gen_range(0..node.inputs.len());
            match node.inputs[slot].decay.take() {
                None => {
                    node.inputs[slot].decay = Some(Box::new(fresh_decay(rng, cfg)));
                    MutationKind::DecayCreate
                }
                Some(dg) => {
                    if rng.gen_bool(0.5) {
                        MutationKind::DecayDelete
                    } else if let Some(m) = mutate_decay_graph(&dg, rng, cfg) {
                        node.inputs[slot].decay = Some(Box::new(m));
                        MutationKind::DecayMutate
                    } else {
                        MutationKind::DecayDelete
                    }
                }
            }
        }
    };
    child.lineage = Some(Lineage { parent: genome.uid.clone(), mutation: kind });
    child
}

/// Identity decay over one schedule; convenient for tests and fixtures.
pub fn schedule_decay(s: ScheduleId) -> DecayGraph {
    Graph { hidden: vec![], output: Node::unary(crate::ops::Unary::Identity, Input::leaf(s)) }
}
