//! Shared fixtures for the benchmark targets.

use prov_core::codec::{encode_edge, encode_node};
use prov_core::gen::{generate, GenConfig};
use prov_core::model::ProvGraph;
use prov_core::store::Store;
use prov_core::TableId;

pub fn benchmark_graph(num_nodes: u64) -> ProvGraph {
    generate(&GenConfig::new(num_nodes, 4, 0xBE5C)).expect("valid config")
}

/// Loads a graph straight into an in-memory store, bypassing the spool.
pub fn load_store(graph: &ProvGraph) -> Store {
    let store = Store::in_memory();
    let mut nodes = Vec::new();
    for node in graph.nodes() {
        nodes.extend(encode_node(node));
    }
    store.put_batch_owned(TableId::Node, nodes).unwrap();
    let mut edges = Vec::new();
    let mut transpose = Vec::new();
    for edge in graph.edges() {
        let encoded = encode_edge(edge);
        edges.extend(encoded.edge);
        transpose.extend(encoded.transpose);
    }
    store.put_batch_owned(TableId::Edge, edges).unwrap();
    store
        .put_batch_owned(TableId::EdgeTranspose, transpose)
        .unwrap();
    store
}
