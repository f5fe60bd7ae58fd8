//! Filtered breadth-first backward traversal over the stored graph:
//! starting from nodes of interest, walk descendant-to-ancestor one store
//! query per hop and report which inputs produced which outputs.
//!
//! Each level scans the transpose table once for every `:outNode|<id>` label
//! in the frontier (one batched scan), then scans the edge table once for
//! the discovered edge ids. Scan counts therefore grow linearly with the
//! effective depth: at most 2 scans per level, plus one per level when a
//! node filter needs attributes, plus one up-front scan to resolve the
//! start set.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::codec::{decode_edge_entries, decode_node_entries, out_node_label, KvEntry, TableId};
use crate::error::{Error, Result};
use crate::model::{EdgeType, NodeKind, ProvNode};
use crate::store::Store;

/// Predicate over node attributes, applied when deciding whether a
/// discovered node may be expanded further.
pub type NodeFilter = Arc<dyn Fn(&ProvNode) -> bool + Send + Sync>;

/// A lineage traversal request.
#[derive(Clone)]
pub struct TraversalQuery {
    pub start_nodes: BTreeSet<String>,
    pub depth: usize,
    pub edge_filter: Option<BTreeSet<EdgeType>>,
    pub node_filter: Option<NodeFilter>,
}

impl TraversalQuery {
    pub fn new<I, S>(start_nodes: I, depth: usize) -> TraversalQuery
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TraversalQuery {
            start_nodes: start_nodes.into_iter().map(Into::into).collect(),
            depth,
            edge_filter: None,
            node_filter: None,
        }
    }

    pub fn with_edge_filter(mut self, types: impl IntoIterator<Item = EdgeType>) -> Self {
        self.edge_filter = Some(types.into_iter().collect());
        self
    }

    pub fn with_node_filter(mut self, filter: NodeFilter) -> Self {
        self.node_filter = Some(filter);
        self
    }
}

/// One output row: a start node at depth 0, or one (ancestor, descendant)
/// pair discovered at depth >= 1.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraversalRow {
    Start {
        node: String,
    },
    Hop {
        depth: usize,
        in_node: String,
        out_node: String,
    },
}

impl TraversalRow {
    pub fn depth(&self) -> usize {
        match self {
            TraversalRow::Start { .. } => 0,
            TraversalRow::Hop { depth, .. } => *depth,
        }
    }
}

/// Traversal output: rows ordered by depth then lexicographically, the
/// number of store scans performed, and any start ids that were not found.
#[derive(Clone, Debug, Default)]
pub struct TraversalResult {
    pub rows: Vec<TraversalRow>,
    pub scans_performed: u64,
    pub missing_starts: Vec<String>,
}

/// Breadth-first backward traversal from the query's start set, to at most
/// `query.depth` hops. Unknown start nodes are reported in
/// `missing_starts` rather than failing the query.
pub fn bfs(store: &Store, query: &TraversalQuery) -> Result<TraversalResult> {
    if query.start_nodes.is_empty() {
        return Err(Error::InvalidConfig("empty start set".into()));
    }
    let mut scans = 0u64;

    // Resolve the start set against the node table.
    let start_entries = store.scan_rows(TableId::Node, query.start_nodes.iter());
    scans += 1;
    let found: BTreeSet<&str> = start_entries.iter().map(|e| e.row.as_str()).collect();
    let missing_starts: Vec<String> = query
        .start_nodes
        .iter()
        .filter(|id| !found.contains(id.as_str()))
        .cloned()
        .collect();

    let mut rows: Vec<TraversalRow> = found
        .iter()
        .map(|id| TraversalRow::Start {
            node: id.to_string(),
        })
        .collect();
    let mut visited: BTreeSet<String> = found.iter().map(|id| id.to_string()).collect();
    let mut frontier = visited.clone();

    for depth in 1..=query.depth {
        if frontier.is_empty() {
            break;
        }
        // One transpose scan for the whole frontier.
        let labels: Vec<String> = frontier.iter().map(|id| out_node_label(id)).collect();
        let transpose_hits = store.scan_rows(TableId::EdgeTranspose, &labels);
        scans += 1;
        let edge_ids: BTreeSet<&str> = transpose_hits.iter().map(|e| e.col.as_str()).collect();
        if edge_ids.is_empty() {
            break;
        }
        // One edge-table scan for the discovered edge ids.
        let edge_entries = store.scan_rows(TableId::Edge, edge_ids.iter());
        scans += 1;
        let mut discovered: BTreeSet<String> = BTreeSet::new();
        for group in group_by_row(&edge_entries) {
            let edge = decode_edge_entries(group)?;
            if let Some(filter) = &query.edge_filter {
                if !filter.contains(&edge.etype()) {
                    continue;
                }
            }
            rows.push(TraversalRow::Hop {
                depth,
                in_node: edge.in_node().to_string(),
                out_node: edge.out_node().to_string(),
            });
            if !visited.contains(edge.in_node()) {
                discovered.insert(edge.in_node().to_string());
            }
        }
        visited.extend(discovered.iter().cloned());
        frontier = match &query.node_filter {
            None => discovered,
            Some(filter) => {
                if discovered.is_empty() {
                    discovered
                } else {
                    // One node-table scan to fetch attributes for admission.
                    let node_entries = store.scan_rows(TableId::Node, discovered.iter());
                    scans += 1;
                    let mut admitted = BTreeSet::new();
                    for group in group_by_row(&node_entries) {
                        let node = decode_node_entries(group)?;
                        if filter(&node) {
                            admitted.insert(node.id().to_string());
                        }
                    }
                    admitted
                }
            }
        };
    }

    rows.sort();
    rows.dedup();
    Ok(TraversalResult {
        rows,
        scans_performed: scans,
        missing_starts,
    })
}

fn group_by_row(entries: &[KvEntry]) -> impl Iterator<Item = &[KvEntry]> {
    // scan_rows output is sorted by (row, col), so rows are contiguous.
    entries.chunk_by(|a, b| a.row == b.row)
}

/// Ancestor entities reachable from `output_node` over generation, usage,
/// and derivation edges: the input data the output was built from.
pub fn lineage_inputs(
    store: &Store,
    output_node: &str,
    max_depth: usize,
) -> Result<BTreeSet<String>> {
    let query = TraversalQuery::new([output_node], max_depth).with_edge_filter([
        EdgeType::Generation,
        EdgeType::Usage,
        EdgeType::Derivation,
    ]);
    let result = bfs(store, &query)?;
    if result.missing_starts.iter().any(|id| id == output_node) {
        return Err(Error::StartNotFound(output_node.to_string()));
    }
    let ancestors: BTreeSet<String> = result
        .rows
        .iter()
        .filter_map(|row| match row {
            TraversalRow::Hop { in_node, .. } if in_node != output_node => Some(in_node.clone()),
            _ => None,
        })
        .collect();
    if ancestors.is_empty() {
        return Ok(BTreeSet::new());
    }
    let node_entries = store.scan_rows(TableId::Node, ancestors.iter());
    let mut inputs = BTreeSet::new();
    for group in group_by_row(&node_entries) {
        let node = decode_node_entries(group)?;
        if node.kind() == NodeKind::Entity {
            inputs.insert(node.id().to_string());
        }
    }
    Ok(inputs)
}

/// Display rows: the traversal keyed by (depth, source label) with one line
/// per key, keeping the lexicographically smallest target when several
/// edges share a source at the same depth. This matches the associative
/// output format of the query listing.
fn display_rows(result: &TraversalResult) -> Vec<(usize, String, String)> {
    let mut collapsed: BTreeMap<(usize, String), String> = BTreeMap::new();
    for row in &result.rows {
        let (key, value) = match row {
            TraversalRow::Start { node } => ((0, node.clone()), "1".to_string()),
            TraversalRow::Hop {
                depth,
                in_node,
                out_node,
            } => (
                (*depth, format!("inNode|{in_node}")),
                format!("outNode|{out_node}"),
            ),
        };
        collapsed
            .entry(key)
            .and_modify(|existing| {
                if value < *existing {
                    *existing = value.clone();
                }
            })
            .or_insert(value);
    }
    collapsed
        .into_iter()
        .map(|((depth, label), value)| (depth, label, value))
        .collect()
}

/// Renders the traversal in the listing format:
///
/// ```text
/// (depthID|0,EN6,)     1,
/// (depthID|1,inNode|AC2,)     outNode|EN6,
/// ```
pub fn format_result(result: &TraversalResult) -> Vec<String> {
    display_rows(result)
        .into_iter()
        .map(|(depth, label, value)| format!("(depthID|{depth},{label},)     {value},"))
        .collect()
}

/// CSV variant of the listing: header `depth,in_node,out_node`, then one
/// row per display row (depth-0 rows leave `out_node` empty).
pub fn format_result_csv(result: &TraversalResult) -> Vec<String> {
    let mut lines = vec!["depth,in_node,out_node".to_string()];
    for (depth, label, value) in display_rows(result) {
        let in_node = label.strip_prefix("inNode|").unwrap_or(&label);
        let out_node = value.strip_prefix("outNode|").unwrap_or("");
        lines.push(format!("{depth},{in_node},{out_node}"));
    }
    lines
}
