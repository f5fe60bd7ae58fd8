//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them).

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use prov_core::analytics::{bfs, TraversalQuery, TraversalRow};
use prov_core::codec::{encode_edge, encode_node, write_tsv};
use prov_core::gen::{generate, graph_depth, GenConfig};
use prov_core::model::{Component, EdgeType, NodeKind, ProvEdge, ProvGraph, ProvNode};
use prov_core::pipeline::mix::{event_mix, scaled_counts, EventMixConfig};
use prov_core::pipeline::{
    discover_batches, run_component_pipeline, run_pipeline, translate_event, PipelineConfig,
    TranslationState,
};
use prov_core::rng::SplitMix64;
use prov_core::sample::sample_graph;
use prov_core::service::{client_send, serve, ServiceConfig, WireEvent};
use prov_core::store::{snapshot_bytes, Store};
use prov_core::TableId;

fn check(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion} ({name}): {verdict} — {detail}");
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sample-graph")
}

fn prov_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prov"))
}

fn load_store(graph: &ProvGraph) -> Store {
    let store = Store::in_memory();
    let mut nodes = Vec::new();
    for node in graph.nodes() {
        nodes.extend(encode_node(node));
    }
    store.put_batch(TableId::Node, &nodes).unwrap();
    let mut edges = Vec::new();
    let mut transpose = Vec::new();
    for edge in graph.edges() {
        let encoded = encode_edge(edge);
        edges.extend(encoded.edge);
        transpose.extend(encoded.transpose);
    }
    store.put_batch(TableId::Edge, &edges).unwrap();
    store.put_batch(TableId::EdgeTranspose, &transpose).unwrap();
    store
}

const NODE_TABLE_GOLDEN: &str = "AC0\t:type|PROV_ACTIVITY\t1\n\
AC1\t:type|PROV_ACTIVITY\t1\n\
AC2\t:type|PROV_ACTIVITY\t1\n\
EN0\t:type|PROV_ENTITY\t1\n\
EN1\t:type|PROV_ENTITY\t1\n\
EN2\t:type|PROV_ENTITY\t1\n\
EN3\t:type|PROV_ENTITY\t1\n\
EN4\t:type|PROV_ENTITY\t1\n\
EN5\t:type|PROV_ENTITY\t1\n\
EN6\t:type|PROV_ENTITY\t1\n\
EN7\t:type|PROV_ENTITY\t1\n";

const EDGE_TABLE_GOLDEN_WGB: &str = "wgb-2\t:inNode|AC2\t1\n\
wgb-2\t:inType|PROV_GENERATION|AC2\t1\n\
wgb-2\t:outNode|EN6\t1\n\
wgb-2\t:outType|PROV_GENERATION|EN6\t1\n\
wgb-2\t:type|PROV_GENERATION\t1\n\
wgb-3\t:inNode|AC2\t1\n\
wgb-3\t:inType|PROV_GENERATION|AC2\t1\n\
wgb-3\t:outNode|EN7\t1\n\
wgb-3\t:outType|PROV_GENERATION|EN7\t1\n\
wgb-3\t:type|PROV_GENERATION\t1\n";

#[test]
fn criterion_1_golden_schema_fidelity() {
    let graph = sample_graph();

    let mut node_bytes = Vec::new();
    for node in graph.nodes() {
        write_tsv(encode_node(node).iter(), &mut node_bytes).unwrap();
    }
    let nodes_exact = node_bytes == NODE_TABLE_GOLDEN.as_bytes();

    let mut wgb_bytes = Vec::new();
    for id in ["wgb-2", "wgb-3"] {
        let edge = graph.edge(id).unwrap();
        write_tsv(encode_edge(edge).edge.iter(), &mut wgb_bytes).unwrap();
    }
    let edges_exact = wgb_bytes == EDGE_TABLE_GOLDEN_WGB.as_bytes();

    // The shipped fixture is the same encoding, byte for byte.
    let fixture_nodes = std::fs::read(fixture_dir().join("batch-00000-node.tsv")).unwrap();
    let fixture_matches = fixture_nodes == node_bytes;

    check(
        1,
        "golden schema fidelity",
        nodes_exact && edges_exact && fixture_matches,
        &format!(
            "11 node entries exact: {nodes_exact}; wgb-2/wgb-3 blocks exact: {edges_exact}; \
             fixture file identical: {fixture_matches}"
        ),
    );
}

#[test]
fn criterion_2_analytic_fidelity() {
    let db = tempfile::tempdir().unwrap();
    let ingest = prov_bin()
        .args(["ingest", "--input"])
        .arg(fixture_dir())
        .arg("--db")
        .arg(db.path())
        .output()
        .unwrap();
    assert!(
        ingest.status.success(),
        "ingest failed: {}",
        String::from_utf8_lossy(&ingest.stderr)
    );

    let query = prov_bin()
        .args(["query", "--db"])
        .arg(db.path())
        .args(["--start", "EN6,EN7", "--depth", "3"])
        .output()
        .unwrap();
    assert!(query.status.success());
    let stdout = String::from_utf8(query.stdout).unwrap();
    let expected = "(depthID|0,EN6,)     1,\n\
(depthID|0,EN7,)     1,\n\
(depthID|1,inNode|AC2,)     outNode|EN6,\n\
(depthID|2,inNode|AC1,)     outNode|AC2,\n\
(depthID|2,inNode|EN5,)     outNode|AC2,\n\
(depthID|3,inNode|AC0,)     outNode|AC1,\n\
(depthID|3,inNode|EN3,)     outNode|AC1,\n\
(depthID|3,inNode|EN4,)     outNode|EN5,\n";
    check(
        2,
        "analytic fidelity",
        stdout == expected,
        &format!(
            "{} output lines, exact match: {}",
            stdout.lines().count(),
            stdout == expected
        ),
    );
}

/// Independent reference traversal over the graph's own adjacency lists.
fn oracle_bfs(graph: &ProvGraph, starts: &BTreeSet<String>, depth: usize) -> Vec<TraversalRow> {
    let mut ancestors_of: HashMap<&str, Vec<&str>> = HashMap::new();
    for edge in graph.edges() {
        ancestors_of
            .entry(edge.out_node())
            .or_default()
            .push(edge.in_node());
    }
    let mut rows: Vec<TraversalRow> = Vec::new();
    let mut visited: BTreeSet<String> = BTreeSet::new();
    let mut frontier: BTreeSet<String> = BTreeSet::new();
    for id in starts {
        if graph.node(id).is_some() {
            rows.push(TraversalRow::Start { node: id.clone() });
            visited.insert(id.clone());
            frontier.insert(id.clone());
        }
    }
    for level in 1..=depth {
        let mut next = BTreeSet::new();
        for out in &frontier {
            for in_node in ancestors_of.get(out.as_str()).into_iter().flatten() {
                rows.push(TraversalRow::Hop {
                    depth: level,
                    in_node: in_node.to_string(),
                    out_node: out.clone(),
                });
                if !visited.contains(*in_node) {
                    next.insert(in_node.to_string());
                }
            }
        }
        visited.extend(next.iter().cloned());
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    rows.sort();
    rows.dedup();
    rows
}

#[test]
fn criterion_3_oracle_equivalence() {
    let begun = Instant::now();
    let sizes = [10u64, 100, 1000];
    let max_edges = [1u64, 4, 8];
    let mut graphs = 0u32;
    for seed in 0..100u64 {
        let n = sizes[(seed % 3) as usize];
        let m = max_edges[((seed / 3) % 3) as usize];
        let graph = generate(&GenConfig::new(n, m, seed)).unwrap();
        let store = load_store(&graph);
        let starts: BTreeSet<String> = graph.output_nodes().into_iter().take(3).collect();
        for depth in 0..=10usize {
            let result = bfs(&store, &TraversalQuery::new(starts.iter().cloned(), depth)).unwrap();
            let expected = oracle_bfs(&graph, &starts, depth);
            assert_eq!(
                result.rows, expected,
                "divergence at seed {seed} n {n} m {m} depth {depth}"
            );
        }
        graphs += 1;
    }
    let elapsed = begun.elapsed();
    check(
        3,
        "oracle equivalence",
        graphs == 100 && elapsed.as_secs() < 300,
        &format!(
            "{graphs} graphs x 11 depths agreed in {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_4_throughput_floor_and_trend() {
    let run_rate = |size: u64| -> (f64, u64) {
        let spool = tempfile::tempdir().unwrap();
        let store = Store::in_memory();
        let config = PipelineConfig::new(10_000, spool.path()).unwrap();
        let graph = generate(&GenConfig::new(size, 4, 1)).unwrap();
        let report = run_component_pipeline(graph.components(), &store, &config).unwrap();
        (report.components_per_sec(), report.components)
    };
    let mut big_rates = Vec::new();
    let mut small_rates = Vec::new();
    let mut big_components = 0;
    for _ in 0..3 {
        let (rate, components) = run_rate(1 << 16);
        big_rates.push(rate);
        big_components = components;
        let (rate, _) = run_rate(1 << 4);
        small_rates.push(rate);
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let big = median(&mut big_rates);
    let small = median(&mut small_rates);
    check(
        4,
        "throughput floor",
        big >= 3758.0 && big > small,
        &format!(
            "2^16 graph ({big_components} components): median {big:.0} components/s \
             (floor 3758); 2^4 median {small:.0} components/s; batching trend holds: {}",
            big > small
        ),
    );
}

/// A derivation chain EN0 <- EN1 <- ... <- EN{depth} with a side branch at
/// every third link; backward depth from the single output is exactly
/// `depth`.
fn chain_graph(depth: usize) -> ProvGraph {
    let mut graph = ProvGraph::new();
    for i in 0..=depth {
        graph
            .add_node(ProvNode::new(format!("EN{i}"), NodeKind::Entity).unwrap())
            .unwrap();
    }
    for i in 1..=depth {
        graph
            .add_edge(
                ProvEdge::numbered(
                    EdgeType::Derivation,
                    i as u64,
                    format!("EN{}", i - 1),
                    format!("EN{i}"),
                )
                .unwrap(),
            )
            .unwrap();
    }
    for i in (3..=depth).step_by(3) {
        let side = format!("SE{i}");
        graph
            .add_node(ProvNode::new(&side, NodeKind::Entity).unwrap())
            .unwrap();
        graph
            .add_edge(
                ProvEdge::numbered(
                    EdgeType::Derivation,
                    1000 + i as u64,
                    side,
                    format!("EN{i}"),
                )
                .unwrap(),
            )
            .unwrap();
    }
    graph
}

#[test]
fn criterion_5_scan_per_hop_law() {
    let mut sampled: Vec<(usize, u64)> = Vec::new();
    let mut check_graph = |graph: &ProvGraph| {
        let starts: Vec<String> = graph.output_nodes().into_iter().collect();
        let depth = graph_depth(graph, &starts).unwrap();
        if !(5..=20).contains(&depth) {
            return;
        }
        let store = load_store(graph);
        let before = store.scan_count();
        let result = bfs(&store, &TraversalQuery::new(starts.iter().cloned(), 64)).unwrap();
        assert_eq!(store.scan_count() - before, result.scans_performed);
        // Two scans per level (transpose + edge fetch), one start-resolution
        // scan, and at most one trailing level with no new discoveries.
        let bound = 2 * (depth as u64 + 1) + 1;
        assert!(
            result.scans_performed <= bound,
            "depth {depth}: {} scans > bound {bound}",
            result.scans_performed
        );
        assert!(result.scans_performed > depth as u64);
        sampled.push((depth, result.scans_performed));
    };

    // Deterministic chains covering the full depth range, plus random
    // graphs whose output-rooted depth lands in it.
    for depth in [5usize, 8, 11, 14, 17, 20] {
        check_graph(&chain_graph(depth));
    }
    for seed in 0..24u64 {
        let n = [900u64, 2000, 4000][(seed % 3) as usize];
        check_graph(&generate(&GenConfig::new(n, 1, seed)).unwrap());
    }

    let depths: BTreeSet<usize> = sampled.iter().map(|(d, _)| *d).collect();
    check(
        5,
        "scan-per-hop law",
        sampled.len() >= 8 && depths.contains(&5) && depths.contains(&20),
        &format!(
            "{} graphs with depths {:?}: scans <= 2*(depth+1)+1 held throughout",
            sampled.len(),
            depths
        ),
    );
}

#[test]
fn criterion_6_conservation_suite() {
    let counts = scaled_counts(1000);
    let expected_counts = [
        (prov_core::pipeline::EventKind::Boot, 1u64),
        (prov_core::pipeline::EventKind::CredFork, 337),
        (prov_core::pipeline::EventKind::Exec, 47),
        (prov_core::pipeline::EventKind::FilePerm, 3851),
        (prov_core::pipeline::EventKind::SetId, 48),
    ];
    assert_eq!(counts, expected_counts, "desk-scale mix counts");

    let mix = EventMixConfig::new(1000, 11);
    let events: Vec<_> = event_mix(&mix).collect();
    let total_events = events.len() as u64;

    // Independent recount of translated components, checking the
    // at-most-two bound for events whose endpoints are already known.
    let mut state = TranslationState::new();
    let mut nodes = 0u64;
    let mut edges = 0u64;
    for event in &events {
        let endpoints_known = state.is_known(&event.subject)
            && (event.object.is_empty() || state.is_known(&event.object));
        let components = translate_event(&mut state, event).unwrap();
        if endpoints_known {
            assert!(components.len() <= 2, "event {}", event.event_id);
        }
        for component in components {
            match component {
                Component::Node(_) => nodes += 1,
                Component::Edge(_) => edges += 1,
            }
        }
    }

    let spool = tempfile::tempdir().unwrap();
    let store = Store::in_memory();
    let config = PipelineConfig::new(2048, spool.path()).unwrap();
    let report = run_pipeline(events, &store, &config).unwrap();

    let events_ok = report.events == total_events;
    let components_ok = report.components == nodes + edges;

    // encoded entries (recounted from the spool files) == stored entries
    let spooled: usize = discover_batches(spool.path())
        .unwrap()
        .iter()
        .map(|d| d.total_entries())
        .sum();
    let stored: usize = TableId::ALL
        .into_iter()
        .map(|t| store.table_stats(t).entries)
        .sum();
    let expected_entries = (nodes + 5 * edges + 5 * edges) as usize;
    let entries_ok = spooled == stored && stored == expected_entries;

    check(
        6,
        "conservation suite",
        events_ok && components_ok && entries_ok,
        &format!(
            "{total_events} events -> {} components; spooled {spooled} == stored {stored} \
             entries; per-event emission bounded",
            report.components
        ),
    );
}

#[test]
fn criterion_7_roundtrip_and_persistence() {
    // 10,000 fuzzed components through encode/decode.
    let mut rng = SplitMix64::new(77);
    let id_chars: Vec<char> = ('a'..='z').chain('A'..='Z').chain('0'..='9').collect();
    let random_id = |rng: &mut SplitMix64| -> String {
        let len = 1 + rng.below(12) as usize;
        (0..len)
            .map(|_| id_chars[rng.below(id_chars.len() as u64) as usize])
            .collect()
    };
    for i in 0..10_000u64 {
        if i % 2 == 0 {
            let kind = NodeKind::ALL[rng.below(3) as usize];
            let mut node = ProvNode::new(random_id(&mut rng), kind).unwrap();
            for a in 0..rng.below(3) {
                node = node
                    .with_attribute(format!("a{a}"), random_id(&mut rng))
                    .unwrap();
            }
            assert_eq!(
                prov_core::codec::decode_node_entries(&encode_node(&node)).unwrap(),
                node
            );
        } else {
            let etype = EdgeType::ALL[rng.below(7) as usize];
            let in_node = random_id(&mut rng);
            let mut out_node = random_id(&mut rng);
            if out_node == in_node {
                out_node.push('q');
            }
            let edge = ProvEdge::numbered(etype, rng.below(1 << 20), in_node, out_node).unwrap();
            assert_eq!(
                prov_core::codec::decode_edge_entries(&encode_edge(&edge).edge).unwrap(),
                edge
            );
        }
    }

    // flush / reopen yields byte-identical dumps.
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let graph = generate(&GenConfig::new(500, 4, 9)).unwrap();
    let spool = tempfile::tempdir().unwrap();
    let config = PipelineConfig::new(1 << 10, spool.path()).unwrap();
    run_component_pipeline(graph.components(), &store, &config).unwrap();
    store.flush().unwrap();
    let first = snapshot_bytes(dir.path()).unwrap();
    let reopened = Store::open(dir.path()).unwrap();
    let dumps_equal = TableId::ALL
        .into_iter()
        .all(|t| reopened.dump(t) == store.dump(t));
    reopened.flush().unwrap();
    let persist_ok = dumps_equal && snapshot_bytes(dir.path()).unwrap() == first;

    // batch-size independence over the desk-scale event stream.
    let mix = EventMixConfig::new(1000, 13);
    let mut fingerprints = Vec::new();
    for batch_size in [1usize << 6, 1 << 10, 1 << 14] {
        let spool = tempfile::tempdir().unwrap();
        let store = Store::in_memory();
        let config = PipelineConfig::new(batch_size, spool.path()).unwrap();
        run_pipeline(event_mix(&mix), &store, &config).unwrap();
        let dump: Vec<Vec<prov_core::KvEntry>> =
            TableId::ALL.into_iter().map(|t| store.dump(t)).collect();
        fingerprints.push(dump);
    }
    let batch_ok = fingerprints.windows(2).all(|w| w[0] == w[1]);

    check(
        7,
        "round-trip and persistence",
        persist_ok && batch_ok,
        &format!(
            "10,000 fuzzed components round-tripped; snapshots byte-identical: {persist_ok}; \
             store state equal across batch sizes 64/1024/16384: {batch_ok}"
        ),
    );
}

#[test]
fn criterion_8_service_conservation() {
    let spool = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::in_memory());
    let pipeline = PipelineConfig::new(10_000, spool.path()).unwrap();
    let server = serve(
        "127.0.0.1:0",
        Arc::clone(&store),
        pipeline,
        ServiceConfig::default(),
    )
    .unwrap();
    let addr = server.local_addr();

    let mut handles = Vec::new();
    for source in 0..4u64 {
        handles.push(std::thread::spawn(move || {
            let name = format!("host{source}");
            let config =
                EventMixConfig::new(160, 100 + source).with_id_prefix(format!("s{source}-"));
            let events: Vec<WireEvent> = event_mix(&config)
                .map(|event| WireEvent {
                    source_id: name.clone(),
                    event,
                })
                .collect();
            let checksum = events
                .iter()
                .fold(0u64, |acc, e| acc.wrapping_add(e.event.event_id));
            let summary = client_send(addr, &events).unwrap();
            (name, summary, checksum)
        }));
    }
    let mut total_acked = 0u64;
    let mut client_side = Vec::new();
    for handle in handles {
        let (name, summary, checksum) = handle.join().unwrap();
        assert_eq!(summary.naks, 0, "{name}");
        total_acked += summary.accepted;
        client_side.push((name, summary.accepted, checksum));
    }
    let report = server.shutdown().unwrap();

    let volume_ok = total_acked >= 100_000;
    let conserved = report.pipeline.events == total_acked && report.accepted == total_acked;
    let mut checksums_ok = true;
    for (name, accepted, checksum) in &client_side {
        let server_side = &report.per_source[name];
        checksums_ok &= server_side.events == *accepted && server_side.id_checksum == *checksum;
    }
    check(
        8,
        "service conservation",
        volume_ok && conserved && checksums_ok,
        &format!(
            "4 clients, {total_acked} events (>= 100000: {volume_ok}); pipeline saw {}; \
             per-source id checksums matched: {checksums_ok}",
            report.pipeline.events
        ),
    );
}
