//! Provenance graph data model: node and edge types, identifier rules, and
//! whole-graph validity (endpoint resolution, kind constraints, acyclicity).
//!
//! Edges are directed from an ancestor (`in_node`, the cause side) to a
//! descendant (`out_node`, the effect side). Lineage traversals walk the
//! opposite way, from `out_node` back to `in_node`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Characters that may not appear in node/edge identifiers or attribute
/// names: the exploded schema uses them as structural separators.
pub const RESERVED_ID_CHARS: [char; 4] = ['\t', '\n', '|', ':'];

fn check_identifier(id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::InvalidId {
            id: id.to_string(),
            reason: "empty",
        });
    }
    if id.contains(RESERVED_ID_CHARS) {
        return Err(Error::InvalidId {
            id: id.to_string(),
            reason: "contains a reserved character (tab, newline, '|' or ':')",
        });
    }
    Ok(())
}

/// The kind of a provenance graph vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Entity,
    Activity,
    Agent,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Entity, NodeKind::Activity, NodeKind::Agent];

    /// Schema rendering string, as stored in `:type|...` columns.
    pub fn render(self) -> &'static str {
        match self {
            NodeKind::Entity => "PROV_ENTITY",
            NodeKind::Activity => "PROV_ACTIVITY",
            NodeKind::Agent => "PROV_AGENT",
        }
    }

    pub fn from_render(s: &str) -> Option<NodeKind> {
        Self::ALL.into_iter().find(|k| k.render() == s)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.render())
    }
}

/// The relation type of a directed provenance edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    Generation,
    Usage,
    Communication,
    Derivation,
    Association,
    Attribution,
    Delegation,
}

impl EdgeType {
    pub const ALL: [EdgeType; 7] = [
        EdgeType::Generation,
        EdgeType::Usage,
        EdgeType::Communication,
        EdgeType::Derivation,
        EdgeType::Association,
        EdgeType::Attribution,
        EdgeType::Delegation,
    ];

    /// Schema rendering string, as stored in `:type|...` columns.
    pub fn render(self) -> &'static str {
        match self {
            EdgeType::Generation => "PROV_GENERATION",
            EdgeType::Usage => "PROV_USAGE",
            EdgeType::Communication => "PROV_COMMUNICATION",
            EdgeType::Derivation => "PROV_DERIVATION",
            EdgeType::Association => "PROV_ASSOCIATION",
            EdgeType::Attribution => "PROV_ATTRIBUTION",
            EdgeType::Delegation => "PROV_DELEGATION",
        }
    }

    /// Identifier prefix for edges of this type (edge ids look like `wgb-2`).
    pub fn id_prefix(self) -> &'static str {
        match self {
            EdgeType::Generation => "wgb",
            EdgeType::Usage => "used",
            EdgeType::Communication => "wib",
            EdgeType::Derivation => "wdf",
            EdgeType::Association => "waw",
            EdgeType::Attribution => "wat",
            EdgeType::Delegation => "aobo",
        }
    }

    pub fn from_render(s: &str) -> Option<EdgeType> {
        Self::ALL.into_iter().find(|t| t.render() == s)
    }

    pub fn from_id_prefix(s: &str) -> Option<EdgeType> {
        Self::ALL.into_iter().find(|t| t.id_prefix() == s)
    }

    /// Permitted endpoint kinds as (ancestor `in_node`, descendant `out_node`).
    pub fn endpoint_kinds(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeType::Generation => (NodeKind::Activity, NodeKind::Entity),
            EdgeType::Usage => (NodeKind::Entity, NodeKind::Activity),
            EdgeType::Communication => (NodeKind::Activity, NodeKind::Activity),
            EdgeType::Derivation => (NodeKind::Entity, NodeKind::Entity),
            EdgeType::Association => (NodeKind::Agent, NodeKind::Activity),
            EdgeType::Attribution => (NodeKind::Agent, NodeKind::Entity),
            EdgeType::Delegation => (NodeKind::Agent, NodeKind::Agent),
        }
    }

    /// Short lowercase name used on the command line (`generation`, `usage`, ...).
    pub fn short_name(self) -> &'static str {
        match self {
            EdgeType::Generation => "generation",
            EdgeType::Usage => "usage",
            EdgeType::Communication => "communication",
            EdgeType::Derivation => "derivation",
            EdgeType::Association => "association",
            EdgeType::Attribution => "attribution",
            EdgeType::Delegation => "delegation",
        }
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.render())
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    /// Accepts the short name, the rendering string, or the id prefix.
    fn from_str(s: &str) -> Result<EdgeType> {
        Self::ALL
            .into_iter()
            .find(|t| {
                t.short_name().eq_ignore_ascii_case(s) || t.render() == s || t.id_prefix() == s
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown edge type {s:?}")))
    }
}

/// A provenance graph vertex with an ordered set of named attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvNode {
    id: String,
    kind: NodeKind,
    attributes: Vec<(String, String)>,
}

impl ProvNode {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Result<ProvNode> {
        let id = id.into();
        check_identifier(&id)?;
        Ok(ProvNode {
            id,
            kind,
            attributes: Vec::new(),
        })
    }

    /// Appends an attribute. Names must be unique per node, must not collide
    /// with the reserved `type` column, and may not contain separator
    /// characters; values may not contain tabs or newlines.
    pub fn with_attribute(
        mut self,
        name: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<ProvNode> {
        let name = name.into();
        let value = value.into();
        if name.is_empty() {
            return Err(Error::InvalidAttribute {
                name,
                reason: "empty name",
            });
        }
        if name == "type" {
            return Err(Error::InvalidAttribute {
                name,
                reason: "reserved name",
            });
        }
        if name.contains(RESERVED_ID_CHARS) {
            return Err(Error::InvalidAttribute {
                name,
                reason: "name contains a reserved character",
            });
        }
        if value.contains(['\t', '\n']) {
            return Err(Error::InvalidAttribute {
                name,
                reason: "value contains a tab or newline",
            });
        }
        if self.attributes.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidAttribute {
                name,
                reason: "duplicate name",
            });
        }
        self.attributes.push((name, value));
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn attributes(&self) -> &[(String, String)] {
        &self.attributes
    }
}

/// A directed provenance relation from ancestor (`in_node`) to descendant
/// (`out_node`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvEdge {
    id: String,
    etype: EdgeType,
    in_node: String,
    out_node: String,
}

impl ProvEdge {
    pub fn new(
        id: impl Into<String>,
        etype: EdgeType,
        in_node: impl Into<String>,
        out_node: impl Into<String>,
    ) -> Result<ProvEdge> {
        let id = id.into();
        let in_node = in_node.into();
        let out_node = out_node.into();
        check_identifier(&id)?;
        check_identifier(&in_node)?;
        check_identifier(&out_node)?;
        let suffix = id.strip_prefix(etype.id_prefix()).and_then(|rest| {
            let rest = rest.strip_prefix('-')?;
            (!rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())).then_some(rest)
        });
        if suffix.is_none() {
            return Err(Error::InvalidId {
                id,
                reason: "edge id must be <type prefix>-<non-negative integer>",
            });
        }
        if in_node == out_node {
            return Err(Error::EdgeViolation {
                edge_id: id,
                reason: format!("self-loop on {in_node:?}"),
            });
        }
        Ok(ProvEdge {
            id,
            etype,
            in_node,
            out_node,
        })
    }

    /// Builds an edge with id `<prefix>-<seq>`.
    pub fn numbered(
        etype: EdgeType,
        seq: u64,
        in_node: impl Into<String>,
        out_node: impl Into<String>,
    ) -> Result<ProvEdge> {
        ProvEdge::new(
            format!("{}-{}", etype.id_prefix(), seq),
            etype,
            in_node,
            out_node,
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn etype(&self) -> EdgeType {
        self.etype
    }

    pub fn in_node(&self) -> &str {
        &self.in_node
    }

    pub fn out_node(&self) -> &str {
        &self.out_node
    }
}

/// One graph component: a node or an edge. This is the unit the ingest rate
/// is measured in.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Component {
    Node(ProvNode),
    Edge(ProvEdge),
}

impl Component {
    pub fn id(&self) -> &str {
        match self {
            Component::Node(n) => n.id(),
            Component::Edge(e) => e.id(),
        }
    }
}

/// Checks an edge against the endpoint-kind constraint table.
///
/// `kind_of` resolves a node id to its kind; an unresolved endpoint is a
/// lookup error naming the missing id, distinct from a constraint violation.
pub fn validate_edge<F>(edge: &ProvEdge, kind_of: F) -> Result<()>
where
    F: Fn(&str) -> Option<NodeKind>,
{
    let in_kind =
        kind_of(edge.in_node()).ok_or_else(|| Error::UnknownNode(edge.in_node().to_string()))?;
    let out_kind =
        kind_of(edge.out_node()).ok_or_else(|| Error::UnknownNode(edge.out_node().to_string()))?;
    if edge.in_node() == edge.out_node() {
        return Err(Error::EdgeViolation {
            edge_id: edge.id().to_string(),
            reason: format!("self-loop on {:?}", edge.in_node()),
        });
    }
    let (want_in, want_out) = edge.etype().endpoint_kinds();
    if (in_kind, out_kind) != (want_in, want_out) {
        return Err(Error::EdgeViolation {
            edge_id: edge.id().to_string(),
            reason: format!(
                "{:?} requires {want_in:?}\u{2192}{want_out:?}, got {in_kind:?}\u{2192}{out_kind:?}",
                edge.etype()
            ),
        });
    }
    Ok(())
}

/// An in-memory provenance graph: nodes and edges keyed by id.
#[derive(Clone, Debug, Default)]
pub struct ProvGraph {
    nodes: BTreeMap<String, ProvNode>,
    edges: BTreeMap<String, ProvEdge>,
}

impl ProvGraph {
    pub fn new() -> ProvGraph {
        ProvGraph::default()
    }

    pub fn add_node(&mut self, node: ProvNode) -> Result<()> {
        if self.nodes.contains_key(node.id()) {
            return Err(Error::DuplicateId(node.id().to_string()));
        }
        self.nodes.insert(node.id().to_string(), node);
        Ok(())
    }

    pub fn add_edge(&mut self, edge: ProvEdge) -> Result<()> {
        if self.edges.contains_key(edge.id()) {
            return Err(Error::DuplicateId(edge.id().to_string()));
        }
        self.edges.insert(edge.id().to_string(), edge);
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&ProvNode> {
        self.nodes.get(id)
    }

    pub fn edge(&self, id: &str) -> Option<&ProvEdge> {
        self.edges.get(id)
    }

    /// Nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &ProvNode> {
        self.nodes.values()
    }

    /// Edges in id order.
    pub fn edges(&self) -> impl Iterator<Item = &ProvEdge> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Total component count: nodes plus edges.
    pub fn component_count(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    /// All components, nodes first then edges, each group in id order.
    pub fn components(&self) -> impl Iterator<Item = Component> + '_ {
        self.nodes
            .values()
            .cloned()
            .map(Component::Node)
            .chain(self.edges.values().cloned().map(Component::Edge))
    }

    /// Nodes nothing was derived from: the final outputs of the recorded
    /// history, and the natural starting points for lineage queries.
    pub fn output_nodes(&self) -> BTreeSet<String> {
        let ancestors: BTreeSet<&str> = self.edges.values().map(|e| e.in_node()).collect();
        self.nodes
            .keys()
            .filter(|id| !ancestors.contains(id.as_str()))
            .cloned()
            .collect()
    }

    /// Whole-graph validity: every edge passes [`validate_edge`] and the
    /// graph is acyclic in the descendant-to-ancestor orientation.
    pub fn validate(&self) -> Result<()> {
        for edge in self.edges.values() {
            validate_edge(edge, |id| self.nodes.get(id).map(|n| n.kind()))?;
        }
        self.check_acyclic()
    }

    fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm over edges oriented out_node -> in_node.
        let mut indegree: HashMap<&str, usize> =
            self.nodes.keys().map(|id| (id.as_str(), 0)).collect();
        let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
        for edge in self.edges.values() {
            adjacency
                .entry(edge.out_node())
                .or_default()
                .push(edge.in_node());
            *indegree.entry(edge.in_node()).or_insert(0) += 1;
        }
        let mut queue: VecDeque<&str> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut processed = 0usize;
        while let Some(id) = queue.pop_front() {
            processed += 1;
            for next in adjacency.get(id).into_iter().flatten() {
                let d = indegree.get_mut(next).expect("endpoint validated above");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(next);
                }
            }
        }
        if processed < indegree.len() {
            let stuck = indegree
                .iter()
                .filter(|(_, d)| **d > 0)
                .map(|(id, _)| *id)
                .min()
                .unwrap_or_default();
            return Err(Error::CycleDetected(stuck.to_string()));
        }
        Ok(())
    }
}
