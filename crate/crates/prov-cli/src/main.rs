//! `prov` — generate, ingest, query, serve, and benchmark provenance graphs
//! backed by the embedded exploded-schema store.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use prov_core::analytics::{bfs, format_result, format_result_csv, TraversalQuery};
use prov_core::gen::{generate, graph_depth, GenConfig, DEFAULT_KIND_WEIGHTS};
use prov_core::model::ProvGraph;
use prov_core::pipeline::{
    discover_batches, ingest_batch_chunked, run_component_pipeline, PipelineConfig, PipelineReport,
    Spooler,
};
use prov_core::service::{serve, ServiceConfig};
use prov_core::store::{IngestStats, Store};
use prov_core::{EdgeType, TableId};

const DEFAULT_BATCH_SIZE: usize = 10_000;

#[derive(Parser)]
#[command(
    name = "prov",
    version,
    about = "Provenance graph ingest and query engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Listing,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random provenance graph and spool it as TSV batches.
    Gen {
        /// Number of nodes to generate; powers like 2^16 are accepted.
        #[arg(long, value_parser = parse_size_arg)]
        nodes: u64,
        /// Maximum edges per node (descendant side).
        #[arg(long, default_value_t = 4)]
        max_edges: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for batch files and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Entries per spooled batch.
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        /// Entity,activity,agent weights, e.g. 6,3,1.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        kind_weights: Option<Vec<u64>>,
    },
    /// Load spooled TSV batches into a store.
    Ingest {
        /// Directory of batch-*.tsv files (as written by `gen`).
        #[arg(long)]
        input: PathBuf,
        /// Store directory.
        #[arg(long, env = "PROV_DB")]
        db: PathBuf,
        /// Entries per store write.
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
    },
    /// Backward lineage traversal from one or more start nodes.
    Query {
        #[arg(long, env = "PROV_DB")]
        db: PathBuf,
        /// Comma-separated start node ids.
        #[arg(long, value_delimiter = ',', required = true)]
        start: Vec<String>,
        /// Maximum number of hops.
        #[arg(long)]
        depth: usize,
        /// Only follow these edge types (e.g. generation,usage,derivation).
        #[arg(long, value_delimiter = ',')]
        edge_types: Option<Vec<String>>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Listing)]
        format: OutputFormat,
    },
    /// Ingest-rate benchmark over a sweep of graph sizes.
    BenchIngest {
        /// Comma-separated node counts; powers like 2^16 are accepted.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<String>,
        #[arg(long, default_value_t = 4)]
        max_edges: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Scratch store root; one subdirectory per size.
        #[arg(long, env = "PROV_DB")]
        db: PathBuf,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        /// Repetitions per size; the median is reported.
        #[arg(long, default_value_t = 3)]
        reps: u32,
        /// Single run per size (no medians).
        #[arg(long)]
        single_run: bool,
    },
    /// Query-time benchmark over a sweep of graph sizes.
    BenchQuery {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<String>,
        #[arg(long, default_value_t = 4)]
        max_edges: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Hop budget for each query.
        #[arg(long, default_value_t = 20)]
        depth_limit: usize,
        #[arg(long, env = "PROV_DB")]
        db: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        reps: u32,
        #[arg(long)]
        single_run: bool,
    },
    /// Accept event streams over TCP and feed them into the store.
    Serve {
        /// Listen address, e.g. 127.0.0.1:7070.
        #[arg(long)]
        listen: String,
        #[arg(long, env = "PROV_DB")]
        db: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        /// Spool directory; defaults to <db>/spool.
        #[arg(long)]
        spool: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Gen {
            nodes,
            max_edges,
            seed,
            out,
            batch_size,
            kind_weights,
        } => cmd_gen(nodes, max_edges, seed, &out, batch_size, kind_weights),
        Command::Ingest {
            input,
            db,
            batch_size,
        } => cmd_ingest(&input, &db, batch_size),
        Command::Query {
            db,
            start,
            depth,
            edge_types,
            format,
        } => cmd_query(&db, start, depth, edge_types, format),
        Command::BenchIngest {
            sizes,
            max_edges,
            seed,
            db,
            out,
            batch_size,
            reps,
            single_run,
        } => cmd_bench_ingest(
            &sizes, max_edges, seed, &db, &out, batch_size, reps, single_run,
        ),
        Command::BenchQuery {
            sizes,
            max_edges,
            seed,
            depth_limit,
            db,
            out,
            reps,
            single_run,
        } => cmd_bench_query(
            &sizes,
            max_edges,
            seed,
            depth_limit,
            &db,
            &out,
            reps,
            single_run,
        ),
        Command::Serve {
            listen,
            db,
            batch_size,
            spool,
        } => cmd_serve(&listen, &db, batch_size, spool),
    }
}

/// Accepts plain integers and `2^k` powers.
fn parse_size(s: &str) -> anyhow::Result<u64> {
    if let Some(exp) = s.strip_prefix("2^") {
        let exp: u32 = exp.parse().with_context(|| format!("bad size {s:?}"))?;
        if exp >= 64 {
            bail!("size {s:?} out of range");
        }
        return Ok(1u64 << exp);
    }
    s.parse().with_context(|| format!("bad size {s:?}"))
}

fn parse_size_arg(s: &str) -> Result<u64, String> {
    parse_size(s).map_err(|e| e.to_string())
}

fn gen_config(nodes: u64, max_edges: u64, seed: u64) -> GenConfig {
    GenConfig::new(nodes, max_edges, seed)
}

fn spool_graph(
    graph: &ProvGraph,
    dir: &Path,
    batch_size: usize,
) -> anyhow::Result<Vec<prov_core::pipeline::BatchDescriptor>> {
    let mut spooler = Spooler::new(dir, batch_size)?;
    let mut batches = Vec::new();
    for component in graph.components() {
        if let Some(desc) = spooler.push(&component)? {
            batches.push(desc);
        }
    }
    if let Some(desc) = spooler.finish()? {
        batches.push(desc);
    }
    Ok(batches)
}

fn write_spool_manifest(
    dir: &Path,
    graph: &ProvGraph,
    config: &GenConfig,
    batches: &[prov_core::pipeline::BatchDescriptor],
) -> anyhow::Result<()> {
    let mut manifest = String::from("prov-spool 1\n");
    manifest.push_str(&format!(
        "config nodes={} max-edges={} seed={}\n",
        config.num_nodes, config.max_edges_per_node, config.seed
    ));
    manifest.push_str(&format!("nodes {}\n", graph.node_count()));
    manifest.push_str(&format!("edges {}\n", graph.edge_count()));
    manifest.push_str(&format!("batches {}\n", batches.len()));
    let total: usize = batches.iter().map(|b| b.total_entries()).sum();
    manifest.push_str(&format!("entries {total}\n"));
    for batch in batches {
        manifest.push_str(&format!(
            "batch {} {} {} {}\n",
            batch.seq, batch.node_entries, batch.edge_entries, batch.transpose_entries
        ));
    }
    fs::write(dir.join("MANIFEST"), manifest).context("write spool manifest")?;
    Ok(())
}

fn cmd_gen(
    nodes: u64,
    max_edges: u64,
    seed: u64,
    out: &Path,
    batch_size: usize,
    kind_weights: Option<Vec<u64>>,
) -> anyhow::Result<()> {
    let mut config = gen_config(nodes, max_edges, seed);
    if let Some(weights) = kind_weights {
        config.kind_weights = [weights[0], weights[1], weights[2]];
    } else {
        config.kind_weights = DEFAULT_KIND_WEIGHTS;
    }
    let graph = generate(&config)?;
    fs::create_dir_all(out).with_context(|| format!("create {}", out.display()))?;
    let batches = spool_graph(&graph, out, batch_size)?;
    write_spool_manifest(out, &graph, &config, &batches)?;
    println!(
        "generated {} nodes, {} edges -> {} batches in {}",
        graph.node_count(),
        graph.edge_count(),
        batches.len(),
        out.display()
    );
    Ok(())
}

fn cmd_ingest(input: &Path, db: &Path, batch_size: usize) -> anyhow::Result<()> {
    if batch_size < 1 {
        bail!("--batch-size must be at least 1");
    }
    let store = Store::open(db)?;
    let batches = discover_batches(input)?;
    let mut stats = IngestStats::default();
    for desc in &batches {
        let batch_stats = ingest_batch_chunked(&store, desc, batch_size)?;
        stats.merge(&batch_stats);
    }
    store.flush()?;
    println!("{}", stats.summary());
    println!("entries,batches,seconds,components_per_sec");
    println!(
        "{},{},{:.6},{:.3}",
        stats.entries_written,
        stats.batches,
        stats.wall.as_secs_f64(),
        stats.components_per_sec()
    );
    Ok(())
}

fn cmd_query(
    db: &Path,
    start: Vec<String>,
    depth: usize,
    edge_types: Option<Vec<String>>,
    format: OutputFormat,
) -> anyhow::Result<()> {
    if !db.join("MANIFEST").exists() {
        bail!("no store at {}", db.display());
    }
    let store = Store::open(db)?;
    let mut query = TraversalQuery::new(start, depth);
    if let Some(names) = edge_types {
        let mut types = BTreeSet::new();
        for name in names {
            types.insert(name.parse::<EdgeType>()?);
        }
        query.edge_filter = Some(types);
    }
    let result = bfs(&store, &query)?;
    for id in &result.missing_starts {
        eprintln!("note: start not found: {id}");
    }
    let lines = match format {
        OutputFormat::Listing => format_result(&result),
        OutputFormat::Csv => format_result_csv(&result),
    };
    let mut stdout = std::io::stdout().lock();
    for line in lines {
        writeln!(stdout, "{line}")?;
    }
    Ok(())
}

/// One benchmark output row. `rate_or_latency` is components/second for
/// ingest rows and seconds for query rows; `max_depth` is 0 for ingest rows.
struct BenchRow {
    graph_nodes: u64,
    components: u64,
    wall_seconds: f64,
    rate_or_latency: f64,
    max_depth: usize,
}

const BENCH_CSV_HEADER: &str = "graph_nodes,components,wall_seconds,rate_or_latency,max_depth";

impl BenchRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{}",
            self.graph_nodes,
            self.components,
            self.wall_seconds,
            self.rate_or_latency,
            self.max_depth
        )
    }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    samples[samples.len() / 2]
}

fn write_csv(path: &Path, rows: &[BenchRow]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("create {}", parent.display()))?;
        }
    }
    let mut out = String::from(BENCH_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv());
        out.push('\n');
    }
    fs::write(path, &out).with_context(|| format!("write {}", path.display()))?;
    print!("{out}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench_ingest(
    sizes: &[String],
    max_edges: u64,
    seed: u64,
    db: &Path,
    out: &Path,
    batch_size: usize,
    reps: u32,
    single_run: bool,
) -> anyhow::Result<()> {
    let reps = if single_run { 1 } else { reps.max(1) };
    let mut rows = Vec::new();
    for size_arg in sizes {
        let size = parse_size(size_arg)?;
        let graph = generate(&gen_config(size, max_edges, seed))?;
        let scratch = db.join(format!("bench-{size}"));
        let mut walls = Vec::new();
        let mut rates = Vec::new();
        let mut report = PipelineReport::default();
        for _ in 0..reps {
            if scratch.exists() {
                fs::remove_dir_all(&scratch)
                    .with_context(|| format!("clear {}", scratch.display()))?;
            }
            let store = Store::open(&scratch)?;
            let config = PipelineConfig::new(batch_size, scratch.join("spool"))?;
            report = run_component_pipeline(graph.components(), &store, &config)
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            walls.push(report.seconds);
            rates.push(report.components_per_sec());
        }
        rows.push(BenchRow {
            graph_nodes: size,
            components: report.components,
            wall_seconds: median(&mut walls),
            rate_or_latency: median(&mut rates),
            max_depth: 0,
        });
    }
    write_csv(out, &rows)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench_query(
    sizes: &[String],
    max_edges: u64,
    seed: u64,
    depth_limit: usize,
    db: &Path,
    out: &Path,
    reps: u32,
    single_run: bool,
) -> anyhow::Result<()> {
    let reps = if single_run { 1 } else { reps.max(1) };
    let mut rows = Vec::new();
    for size_arg in sizes {
        let size = parse_size(size_arg)?;
        let graph = generate(&gen_config(size, max_edges, seed))?;
        let scratch = db.join(format!("bench-query-{size}"));
        if scratch.exists() {
            fs::remove_dir_all(&scratch).with_context(|| format!("clear {}", scratch.display()))?;
        }
        let store = Store::open(&scratch)?;
        let config = PipelineConfig::new(DEFAULT_BATCH_SIZE, scratch.join("spool"))?;
        run_component_pipeline(graph.components(), &store, &config)
            .map_err(|e| anyhow::anyhow!("{e}"))?;

        let starts = graph.output_nodes();
        let start_refs: Vec<&String> = starts.iter().collect();
        let actual_depth = graph_depth(&graph, &start_refs)?;
        let query = TraversalQuery::new(starts.iter().cloned(), depth_limit);
        let mut walls = Vec::new();
        let mut result_rows = 0usize;
        for _ in 0..reps {
            let begun = Instant::now();
            let result = bfs(&store, &query)?;
            walls.push(begun.elapsed().as_secs_f64());
            result_rows = result.rows.len();
        }
        let wall = median(&mut walls);
        eprintln!("size {size}: depth {actual_depth}, {result_rows} rows, {wall:.6}s per query");
        rows.push(BenchRow {
            graph_nodes: size,
            components: graph.component_count() as u64,
            wall_seconds: wall,
            rate_or_latency: wall,
            max_depth: actual_depth,
        });
    }
    write_csv(out, &rows)
}

fn cmd_serve(
    listen: &str,
    db: &Path,
    batch_size: usize,
    spool: Option<PathBuf>,
) -> anyhow::Result<()> {
    let store = Arc::new(Store::open(db)?);
    let spool = spool.unwrap_or_else(|| db.join("spool"));
    let pipeline = PipelineConfig::new(batch_size, &spool)?;
    let server = serve(
        listen,
        Arc::clone(&store),
        pipeline,
        ServiceConfig::default(),
    )
    .with_context(|| format!("serve on {listen}"))?;
    println!(
        "listening on {} (store {}, spool {})",
        server.local_addr(),
        db.display(),
        spool.display()
    );
    println!("send \"stop\" or close stdin to shut down");

    // Shutdown on stdin EOF or a "stop" line; equivalent to a termination
    // signal but portable and testable.
    let stdin = std::io::stdin();
    for line in stdin.lock().lines() {
        let line = line.unwrap_or_default();
        if line.trim() == "stop" {
            break;
        }
    }

    let report = server.shutdown()?;
    store.flush()?;
    println!("{}", report.pipeline.summary());
    println!(
        "accepted {} events ({} naks) across {} connections",
        report.accepted, report.naks, report.connections
    );
    for (source, stats) in &report.per_source {
        println!(
            "source {source}: {} events, id checksum {:#018x}",
            stats.events, stats.id_checksum
        );
    }
    for table in TableId::ALL {
        let stats = store.table_stats(table);
        println!(
            "table {table}: {} entries, {} rows",
            stats.entries, stats.distinct_rows
        );
    }
    Ok(())
}
