//! A small worked example graph, used by the bundled fixture, the golden
//! tests, and the documentation.
//!
//! Two output files (EN6, EN7) were generated by a process AC2, which read
//! EN5 and was informed by AC1; EN5 derives from EN4; AC1 read EN3 and was
//! informed by AC0; AC0 read the three source files EN0..EN2 and generated
//! EN3 and EN4.

use crate::model::{EdgeType, NodeKind, ProvEdge, ProvGraph, ProvNode};

/// Builds the example graph: 11 nodes (3 activities, 8 entities) and 12
/// edges. Always passes validation.
pub fn sample_graph() -> ProvGraph {
    let mut graph = ProvGraph::new();
    for id in ["AC0", "AC1", "AC2"] {
        graph
            .add_node(ProvNode::new(id, NodeKind::Activity).expect("static id"))
            .expect("unique id");
    }
    for id in ["EN0", "EN1", "EN2", "EN3", "EN4", "EN5", "EN6", "EN7"] {
        graph
            .add_node(ProvNode::new(id, NodeKind::Entity).expect("static id"))
            .expect("unique id");
    }
    let edges = [
        ("used-0", EdgeType::Usage, "EN0", "AC0"),
        ("used-1", EdgeType::Usage, "EN1", "AC0"),
        ("used-2", EdgeType::Usage, "EN2", "AC0"),
        ("used-3", EdgeType::Usage, "EN3", "AC1"),
        ("used-4", EdgeType::Usage, "EN5", "AC2"),
        ("wgb-0", EdgeType::Generation, "AC0", "EN3"),
        ("wgb-1", EdgeType::Generation, "AC0", "EN4"),
        ("wgb-2", EdgeType::Generation, "AC2", "EN6"),
        ("wgb-3", EdgeType::Generation, "AC2", "EN7"),
        ("wib-0", EdgeType::Communication, "AC0", "AC1"),
        ("wib-1", EdgeType::Communication, "AC1", "AC2"),
        ("wdf-0", EdgeType::Derivation, "EN4", "EN5"),
    ];
    for (id, etype, in_node, out_node) in edges {
        graph
            .add_edge(ProvEdge::new(id, etype, in_node, out_node).expect("static edge"))
            .expect("unique id");
    }
    graph
}
