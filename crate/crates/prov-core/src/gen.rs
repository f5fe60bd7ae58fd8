//! Deterministic random provenance-graph generator for benchmark inputs.
//!
//! Nodes are created sequentially with kinds drawn from configurable
//! weights; each new node draws up to `max_edges_per_node` edges toward
//! uniformly chosen earlier nodes of a compatible kind, so every graph is
//! valid and acyclic by construction and a given config always yields the
//! same graph.

use crate::error::{Error, Result};
use crate::model::{EdgeType, NodeKind, ProvEdge, ProvGraph, ProvNode};
use crate::rng::SplitMix64;

/// Default kind weights (entity : activity : agent). File-heavy system
/// workloads are dominated by entities, with few agents.
pub const DEFAULT_KIND_WEIGHTS: [u64; 3] = [6, 3, 1];

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub num_nodes: u64,
    pub max_edges_per_node: u64,
    pub seed: u64,
    /// Weights for Entity / Activity / Agent.
    pub kind_weights: [u64; 3],
}

impl GenConfig {
    pub fn new(num_nodes: u64, max_edges_per_node: u64, seed: u64) -> GenConfig {
        GenConfig {
            num_nodes,
            max_edges_per_node,
            seed,
            kind_weights: DEFAULT_KIND_WEIGHTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 1 {
            return Err(Error::InvalidConfig("num_nodes must be at least 1".into()));
        }
        if self.max_edges_per_node < 1 {
            return Err(Error::InvalidConfig(
                "max_edges_per_node must be at least 1".into(),
            ));
        }
        if self.kind_weights.iter().all(|w| *w == 0) {
            return Err(Error::InvalidConfig(
                "kind_weights must not all be zero".into(),
            ));
        }
        Ok(())
    }
}

fn kind_index(kind: NodeKind) -> usize {
    match kind {
        NodeKind::Entity => 0,
        NodeKind::Activity => 1,
        NodeKind::Agent => 2,
    }
}

fn id_prefix(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Entity => "EN",
        NodeKind::Activity => "AC",
        NodeKind::Agent => "AG",
    }
}

/// Relation types a node of this kind can be the descendant of.
fn permitted_relations(out_kind: NodeKind) -> &'static [EdgeType] {
    match out_kind {
        NodeKind::Entity => &[
            EdgeType::Generation,
            EdgeType::Derivation,
            EdgeType::Attribution,
        ],
        NodeKind::Activity => &[
            EdgeType::Usage,
            EdgeType::Communication,
            EdgeType::Association,
        ],
        NodeKind::Agent => &[EdgeType::Delegation],
    }
}

/// Generates a valid provenance graph with exactly `num_nodes` nodes and at
/// most `max_edges_per_node` descendant-side edges per node. A pure function
/// of the config, seed included.
pub fn generate(config: &GenConfig) -> Result<ProvGraph> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let total_weight: u64 = config.kind_weights.iter().sum();
    let mut graph = ProvGraph::new();
    let mut by_kind: [Vec<String>; 3] = Default::default();
    let mut kind_counters = [0u64; 3];
    let mut edge_counters = [0u64; 7];

    for _ in 0..config.num_nodes {
        let mut roll = rng.below(total_weight);
        let mut kind = NodeKind::Agent;
        for k in NodeKind::ALL {
            let w = config.kind_weights[kind_index(k)];
            if roll < w {
                kind = k;
                break;
            }
            roll -= w;
        }
        let ki = kind_index(kind);
        let id = format!("{}{}", id_prefix(kind), kind_counters[ki]);
        kind_counters[ki] += 1;
        graph.add_node(ProvNode::new(id.clone(), kind)?)?;

        let draws = rng.below(config.max_edges_per_node + 1);
        for _ in 0..draws {
            let choices = permitted_relations(kind);
            let etype = *rng.pick(choices).expect("non-empty relation table");
            let (ancestor_kind, _) = etype.endpoint_kinds();
            // Earlier nodes only: the new node has not been added to the
            // pools yet, so any pick is strictly older and the graph stays
            // acyclic.
            let Some(ancestor) = rng.pick(&by_kind[kind_index(ancestor_kind)]) else {
                continue;
            };
            let type_index = EdgeType::ALL.iter().position(|t| *t == etype).unwrap();
            let seq = edge_counters[type_index];
            edge_counters[type_index] += 1;
            graph.add_edge(ProvEdge::numbered(
                etype,
                seq,
                ancestor.clone(),
                id.clone(),
            )?)?;
        }
        by_kind[ki].push(id);
    }
    Ok(graph)
}

/// Maximum hop count reachable by backward traversal (descendant to
/// ancestor) from the start set.
pub fn graph_depth<S: AsRef<str>>(graph: &ProvGraph, start: &[S]) -> Result<usize> {
    use std::collections::{HashMap, HashSet};

    let mut frontier: HashSet<&str> = HashSet::new();
    for id in start {
        let id = id.as_ref();
        if graph.node(id).is_none() {
            return Err(Error::UnknownNode(id.to_string()));
        }
        frontier.insert(graph.node(id).unwrap().id());
    }
    let mut ancestors_of: HashMap<&str, Vec<&str>> = HashMap::new();
    for edge in graph.edges() {
        ancestors_of
            .entry(edge.out_node())
            .or_default()
            .push(edge.in_node());
    }
    let mut visited = frontier.clone();
    let mut depth = 0usize;
    while !frontier.is_empty() {
        let mut next: HashSet<&str> = HashSet::new();
        for node in &frontier {
            for anc in ancestors_of.get(node).into_iter().flatten() {
                if visited.insert(anc) {
                    next.insert(anc);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        depth += 1;
        frontier = next;
    }
    Ok(depth)
}
