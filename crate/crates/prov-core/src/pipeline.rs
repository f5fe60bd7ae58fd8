//! Ingest pipeline: translate raw system events into graph components,
//! spool components to tab-separated batch files, and load batches into the
//! store while measuring throughput.

pub mod mix;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::codec::{
    batch_file_name, encode_edge, encode_node, parse_tsv, write_tsv, KvEntry, TableId,
};
use crate::error::{Error, Result};
use crate::model::{Component, EdgeType, NodeKind, ProvEdge, ProvNode};
use crate::store::{IngestStats, Store};

/// The five captured kernel event types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Boot,
    CredFork,
    Exec,
    FilePerm,
    SetId,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::Boot,
        EventKind::CredFork,
        EventKind::Exec,
        EventKind::FilePerm,
        EventKind::SetId,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Boot => "boot",
            EventKind::CredFork => "credfork",
            EventKind::Exec => "exec",
            EventKind::FilePerm => "fperm",
            EventKind::SetId => "setid",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<EventKind> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown event type {s:?}")))
    }
}

/// Access mode for file-permission events; `-` for everything else.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileMode {
    Read,
    Write,
    None,
}

impl FileMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FileMode::Read => "r",
            FileMode::Write => "w",
            FileMode::None => "-",
        }
    }
}

impl FromStr for FileMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<FileMode> {
        match s {
            "r" => Ok(FileMode::Read),
            "w" => Ok(FileMode::Write),
            "-" => Ok(FileMode::None),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// One raw event awaiting translation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub event_id: u64,
    pub kind: EventKind,
    /// Acting process (always) — the subject side of the event.
    pub subject: String,
    /// File, process, image, or uid acted on; empty for boot.
    pub object: String,
    pub timestamp_us: u64,
    pub mode: FileMode,
}

/// Translator state: which node ids have already been emitted and the next
/// id suffix per edge type.
#[derive(Clone, Debug, Default)]
pub struct TranslationState {
    known: HashMap<String, NodeKind>,
    edge_seq: [u64; 7],
}

impl TranslationState {
    pub fn new() -> TranslationState {
        TranslationState::default()
    }

    pub fn known_nodes(&self) -> usize {
        self.known.len()
    }

    pub fn is_known(&self, id: &str) -> bool {
        self.known.contains_key(id)
    }

    fn ensure_node(
        &mut self,
        event: &EventRecord,
        id: &str,
        kind: NodeKind,
        out: &mut Vec<Component>,
    ) -> Result<()> {
        match self.known.get(id) {
            Some(existing) if *existing == kind => Ok(()),
            Some(existing) => Err(Error::MalformedEvent {
                event_id: event.event_id,
                reason: format!("node {id:?} already emitted as {existing:?}, now {kind:?}"),
            }),
            None => {
                let node = ProvNode::new(id, kind).map_err(|e| Error::MalformedEvent {
                    event_id: event.event_id,
                    reason: e.to_string(),
                })?;
                self.known.insert(id.to_string(), kind);
                out.push(Component::Node(node));
                Ok(())
            }
        }
    }

    fn next_edge(&mut self, etype: EdgeType, in_node: &str, out_node: &str) -> Result<ProvEdge> {
        let idx = EdgeType::ALL.iter().position(|t| *t == etype).unwrap();
        let edge = ProvEdge::numbered(etype, self.edge_seq[idx], in_node, out_node)?;
        self.edge_seq[idx] += 1;
        Ok(edge)
    }
}

fn malformed(event: &EventRecord, reason: impl Into<String>) -> Error {
    Error::MalformedEvent {
        event_id: event.event_id,
        reason: reason.into(),
    }
}

/// Translates one event into graph components: any endpoint node not yet
/// emitted, plus at most one edge. With both endpoints already known an
/// event emits at most two new components.
///
/// The translation table:
///
/// | event          | nodes                       | edge                          |
/// |----------------|-----------------------------|-------------------------------|
/// | boot           | kernel activity (subject)   | none                          |
/// | credfork       | parent + child activities   | communication parent -> child |
/// | exec           | caller + image activities   | communication caller -> image |
/// | fperm (read)   | process activity + file     | usage file -> process         |
/// | fperm (write)  | process activity + file     | generation process -> file    |
/// | setid          | process activity + uid agent| association agent -> process  |
pub fn translate_event(
    state: &mut TranslationState,
    event: &EventRecord,
) -> Result<Vec<Component>> {
    if event.subject.is_empty() {
        return Err(malformed(event, "empty subject"));
    }
    if event.kind != EventKind::Boot && event.object.is_empty() {
        return Err(malformed(event, "empty object"));
    }
    let mut out = Vec::with_capacity(3);
    match event.kind {
        EventKind::Boot => {
            if !event.object.is_empty() {
                return Err(malformed(event, "boot event carries an object"));
            }
            state.ensure_node(event, &event.subject, NodeKind::Activity, &mut out)?;
        }
        EventKind::CredFork | EventKind::Exec => {
            if event.subject == event.object {
                return Err(malformed(event, "subject and object are the same node"));
            }
            state.ensure_node(event, &event.subject, NodeKind::Activity, &mut out)?;
            state.ensure_node(event, &event.object, NodeKind::Activity, &mut out)?;
            let edge = state.next_edge(EdgeType::Communication, &event.subject, &event.object)?;
            out.push(Component::Edge(edge));
        }
        EventKind::FilePerm => {
            state.ensure_node(event, &event.subject, NodeKind::Activity, &mut out)?;
            state.ensure_node(event, &event.object, NodeKind::Entity, &mut out)?;
            let edge = match event.mode {
                FileMode::Read => {
                    state.next_edge(EdgeType::Usage, &event.object, &event.subject)?
                }
                FileMode::Write => {
                    state.next_edge(EdgeType::Generation, &event.subject, &event.object)?
                }
                FileMode::None => return Err(malformed(event, "fperm requires mode r or w")),
            };
            out.push(Component::Edge(edge));
        }
        EventKind::SetId => {
            state.ensure_node(event, &event.subject, NodeKind::Activity, &mut out)?;
            state.ensure_node(event, &event.object, NodeKind::Agent, &mut out)?;
            let edge = state.next_edge(EdgeType::Association, &event.object, &event.subject)?;
            out.push(Component::Edge(edge));
        }
    }
    Ok(out)
}

/// Pipeline tuning: entries per spooled batch, where batches land on disk,
/// and how often to log progress (0 = never).
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub batch_size: usize,
    pub spool_dir: PathBuf,
    pub report_interval: u64,
}

impl PipelineConfig {
    pub fn new(batch_size: usize, spool_dir: impl Into<PathBuf>) -> Result<PipelineConfig> {
        if batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        Ok(PipelineConfig {
            batch_size,
            spool_dir: spool_dir.into(),
            report_interval: 0,
        })
    }
}

/// Paths and entry counts of one completed batch (node, edge, and
/// edge-transpose files).
#[derive(Clone, Debug)]
pub struct BatchDescriptor {
    pub seq: u64,
    pub node_path: PathBuf,
    pub edge_path: PathBuf,
    pub transpose_path: PathBuf,
    pub node_entries: usize,
    pub edge_entries: usize,
    pub transpose_entries: usize,
}

impl BatchDescriptor {
    pub fn total_entries(&self) -> usize {
        self.node_entries + self.edge_entries + self.transpose_entries
    }

    pub fn path(&self, table: TableId) -> &Path {
        match table {
            TableId::Node => &self.node_path,
            TableId::Edge => &self.edge_path,
            TableId::EdgeTranspose => &self.transpose_path,
        }
    }
}

/// Encodes components and accumulates entries until `batch_size` is reached,
/// then writes the three per-batch TSV files.
pub struct Spooler {
    dir: PathBuf,
    batch_size: usize,
    seq: u64,
    node_buf: Vec<KvEntry>,
    edge_buf: Vec<KvEntry>,
    transpose_buf: Vec<KvEntry>,
}

impl Spooler {
    pub fn new(dir: impl Into<PathBuf>, batch_size: usize) -> Result<Spooler> {
        if batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .map_err(|e| Error::io(format!("create spool dir {}", dir.display()), e))?;
        Ok(Spooler {
            dir,
            batch_size,
            seq: 0,
            node_buf: Vec::new(),
            edge_buf: Vec::new(),
            transpose_buf: Vec::new(),
        })
    }

    pub fn buffered_entries(&self) -> usize {
        self.node_buf.len() + self.edge_buf.len() + self.transpose_buf.len()
    }

    pub fn next_seq(&self) -> u64 {
        self.seq
    }

    /// Encodes one component into the current batch; returns the completed
    /// batch descriptor when the entry threshold is crossed.
    pub fn push(&mut self, component: &Component) -> Result<Option<BatchDescriptor>> {
        match component {
            Component::Node(node) => self.node_buf.extend(encode_node(node)),
            Component::Edge(edge) => {
                let encoded = encode_edge(edge);
                self.edge_buf.extend(encoded.edge);
                self.transpose_buf.extend(encoded.transpose);
            }
        }
        if self.buffered_entries() >= self.batch_size {
            return Ok(Some(self.complete_batch()?));
        }
        Ok(None)
    }

    /// Spools a sequence of components, returning every batch completed
    /// along the way.
    pub fn push_all<'a, I>(&mut self, components: I) -> Result<Vec<BatchDescriptor>>
    where
        I: IntoIterator<Item = &'a Component>,
    {
        let mut done = Vec::new();
        for component in components {
            if let Some(desc) = self.push(component)? {
                done.push(desc);
            }
        }
        Ok(done)
    }

    /// Flushes any buffered entries as a final (possibly short) batch.
    pub fn finish(&mut self) -> Result<Option<BatchDescriptor>> {
        if self.buffered_entries() == 0 {
            return Ok(None);
        }
        Ok(Some(self.complete_batch()?))
    }

    fn complete_batch(&mut self) -> Result<BatchDescriptor> {
        let seq = self.seq;
        let mut written: Vec<PathBuf> = Vec::with_capacity(3);
        let mut write_file = |table: TableId, entries: &[KvEntry]| -> Result<PathBuf> {
            let path = self.dir.join(batch_file_name(seq, table));
            let file = fs::File::create(&path)
                .map_err(|e| Error::io(format!("create {}", path.display()), e))?;
            let mut writer = std::io::BufWriter::new(file);
            write_tsv(entries.iter(), &mut writer)?;
            use std::io::Write as _;
            writer
                .flush()
                .map_err(|e| Error::io(format!("flush {}", path.display()), e))?;
            written.push(path.clone());
            Ok(path)
        };
        let result = (|| {
            let node_path = write_file(TableId::Node, &self.node_buf)?;
            let edge_path = write_file(TableId::Edge, &self.edge_buf)?;
            let transpose_path = write_file(TableId::EdgeTranspose, &self.transpose_buf)?;
            Ok(BatchDescriptor {
                seq,
                node_path,
                edge_path,
                transpose_path,
                node_entries: self.node_buf.len(),
                edge_entries: self.edge_buf.len(),
                transpose_entries: self.transpose_buf.len(),
            })
        })();
        match result {
            Ok(desc) => {
                self.seq += 1;
                self.node_buf.clear();
                self.edge_buf.clear();
                self.transpose_buf.clear();
                Ok(desc)
            }
            Err(e) => {
                // A failed batch leaves no files behind; buffers are kept.
                for path in written {
                    let _ = fs::remove_file(path);
                }
                Err(e)
            }
        }
    }
}

/// Lists previously spooled batches in a directory, in sequence order.
/// Entry counts are taken from the files themselves.
pub fn discover_batches(dir: &Path) -> Result<Vec<BatchDescriptor>> {
    let mut seqs = Vec::new();
    let listing =
        fs::read_dir(dir).map_err(|e| Error::io(format!("read spool dir {}", dir.display()), e))?;
    for entry in listing {
        let entry = entry.map_err(|e| Error::io("read spool dir entry", e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(seq) = name
            .strip_prefix("batch-")
            .and_then(|s| s.strip_suffix("-node.tsv"))
        {
            if let Ok(seq) = seq.parse::<u64>() {
                seqs.push(seq);
            }
        }
    }
    seqs.sort_unstable();
    let mut out = Vec::with_capacity(seqs.len());
    for seq in seqs {
        let node_path = dir.join(batch_file_name(seq, TableId::Node));
        let edge_path = dir.join(batch_file_name(seq, TableId::Edge));
        let transpose_path = dir.join(batch_file_name(seq, TableId::EdgeTranspose));
        let count = |path: &Path| -> Result<usize> {
            let file = fs::File::open(path)
                .map_err(|e| Error::io(format!("open {}", path.display()), e))?;
            Ok(parse_tsv(BufReader::new(file))?.len())
        };
        out.push(BatchDescriptor {
            node_entries: count(&node_path)?,
            edge_entries: count(&edge_path)?,
            transpose_entries: count(&transpose_path)?,
            seq,
            node_path,
            edge_path,
            transpose_path,
        });
    }
    Ok(out)
}

/// Loads one spooled batch into the store. All three files are parsed before
/// anything is written, so a parse error leaves the store untouched.
pub fn ingest_batch(store: &Store, desc: &BatchDescriptor) -> Result<IngestStats> {
    ingest_batch_chunked(store, desc, usize::MAX)
}

/// Like [`ingest_batch`] but applies entries in store writes of at most
/// `chunk` entries each.
pub fn ingest_batch_chunked(
    store: &Store,
    desc: &BatchDescriptor,
    chunk: usize,
) -> Result<IngestStats> {
    let start = Instant::now();
    let mut parsed: Vec<(TableId, Vec<KvEntry>)> = Vec::with_capacity(3);
    for table in TableId::ALL {
        let path = desc.path(table);
        let file =
            fs::File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
        let entries = parse_tsv(BufReader::new(file)).map_err(|e| match e {
            Error::Parse { line, reason } => Error::Parse {
                line,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })?;
        parsed.push((table, entries));
    }
    let components = distinct_rows(&parsed[TableId::Node.index()].1)
        + distinct_rows(&parsed[TableId::Edge.index()].1);
    let chunk = chunk.max(1);
    let mut entries_written = 0u64;
    for (table, entries) in parsed {
        if entries.len() <= chunk {
            entries_written += store.put_batch_owned(table, entries)? as u64;
        } else {
            let mut rest = entries;
            while !rest.is_empty() {
                let tail = rest.split_off(chunk.min(rest.len()));
                entries_written += store.put_batch_owned(table, rest)? as u64;
                rest = tail;
            }
        }
    }
    Ok(IngestStats {
        entries_written,
        batches: 1,
        components: components as u64,
        wall: start.elapsed(),
    })
}

fn distinct_rows(entries: &[KvEntry]) -> usize {
    let mut rows: Vec<&str> = entries.iter().map(|e| e.row.as_str()).collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// End-to-end pipeline accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PipelineReport {
    /// Records consumed from the source (events, or components when the
    /// pipeline is fed graph components directly).
    pub events: u64,
    pub components: u64,
    pub batches: u64,
    pub seconds: f64,
}

impl PipelineReport {
    pub const CSV_HEADER: &'static str = "events,components,batches,seconds,components_per_sec";

    pub fn components_per_sec(&self) -> f64 {
        if self.seconds > 0.0 {
            self.components as f64 / self.seconds
        } else {
            0.0
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.3}",
            self.events,
            self.components,
            self.batches,
            self.seconds,
            self.components_per_sec()
        )
    }

    pub fn summary(&self) -> String {
        format!(
            "{} events in, {} components, {} batches, {:.3}s, {:.1} components/s",
            self.events,
            self.components,
            self.batches,
            self.seconds,
            self.components_per_sec()
        )
    }
}

/// A pipeline stage failed; `partial` reports progress up to the failure.
#[derive(Debug)]
pub struct PipelineFailure {
    pub partial: PipelineReport,
    pub cause: Error,
}

impl fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "pipeline stopped after {} events / {} components: {}",
            self.partial.events, self.partial.components, self.cause
        )
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.cause)
    }
}

/// Incremental pipeline: push events (or components), batches spill to the
/// spool directory and load into the store as they fill; `finish` flushes
/// the tail batch and returns the report.
pub struct PipelineRunner<'s> {
    store: &'s Store,
    state: TranslationState,
    spooler: Spooler,
    events: u64,
    components: u64,
    batches: u64,
    entries_spooled: u64,
    entries_stored: u64,
    report_interval: u64,
    started: Instant,
}

impl<'s> PipelineRunner<'s> {
    pub fn new(store: &'s Store, config: &PipelineConfig) -> Result<PipelineRunner<'s>> {
        Ok(PipelineRunner {
            store,
            state: TranslationState::new(),
            spooler: Spooler::new(&config.spool_dir, config.batch_size)?,
            events: 0,
            components: 0,
            batches: 0,
            entries_spooled: 0,
            entries_stored: 0,
            report_interval: config.report_interval,
            started: Instant::now(),
        })
    }

    pub fn push_event(&mut self, event: &EventRecord) -> Result<()> {
        self.events += 1;
        let components = translate_event(&mut self.state, event)?;
        for component in &components {
            self.spool_component(component)?;
        }
        self.maybe_report();
        Ok(())
    }

    pub fn push_component(&mut self, component: &Component) -> Result<()> {
        self.events += 1;
        self.spool_component(component)?;
        self.maybe_report();
        Ok(())
    }

    fn spool_component(&mut self, component: &Component) -> Result<()> {
        self.components += 1;
        if let Some(desc) = self.spooler.push(component)? {
            self.absorb(&desc)?;
        }
        Ok(())
    }

    fn absorb(&mut self, desc: &BatchDescriptor) -> Result<()> {
        self.entries_spooled += desc.total_entries() as u64;
        let stats = ingest_batch(self.store, desc)?;
        self.entries_stored += stats.entries_written;
        self.batches += 1;
        Ok(())
    }

    fn maybe_report(&self) {
        if self.report_interval > 0 && self.events.is_multiple_of(self.report_interval) {
            eprintln!(
                "pipeline: {} events, {} components, {} batches",
                self.events, self.components, self.batches
            );
        }
    }

    /// Progress so far, without consuming the runner.
    pub fn snapshot(&self) -> PipelineReport {
        PipelineReport {
            events: self.events,
            components: self.components,
            batches: self.batches,
            seconds: self.started.elapsed().as_secs_f64(),
        }
    }

    /// Entries written to batch files so far (completed batches only).
    pub fn entries_spooled(&self) -> u64 {
        self.entries_spooled
    }

    /// Entries applied to the store so far.
    pub fn entries_stored(&self) -> u64 {
        self.entries_stored
    }

    pub fn finish(mut self) -> Result<PipelineReport> {
        if let Some(desc) = self.spooler.finish()? {
            self.absorb(&desc)?;
        }
        Ok(self.snapshot())
    }
}

/// Runs the full pipeline over an event source. A stage error stops the run
/// and reports partial progress.
pub fn run_pipeline<I>(
    events: I,
    store: &Store,
    config: &PipelineConfig,
) -> Result<PipelineReport, PipelineFailure>
where
    I: IntoIterator<Item = EventRecord>,
{
    let mut runner = match PipelineRunner::new(store, config) {
        Ok(r) => r,
        Err(cause) => {
            return Err(PipelineFailure {
                partial: PipelineReport::default(),
                cause,
            })
        }
    };
    for event in events {
        if let Err(cause) = runner.push_event(&event) {
            return Err(PipelineFailure {
                partial: runner.snapshot(),
                cause,
            });
        }
    }
    let partial = runner.snapshot();
    runner
        .finish()
        .map_err(|cause| PipelineFailure { partial, cause })
}

/// Runs the spool + load stages over graph components directly, as the
/// benchmarks do. `events` in the report counts components consumed.
pub fn run_component_pipeline<I>(
    components: I,
    store: &Store,
    config: &PipelineConfig,
) -> Result<PipelineReport, PipelineFailure>
where
    I: IntoIterator<Item = Component>,
{
    let mut runner = match PipelineRunner::new(store, config) {
        Ok(r) => r,
        Err(cause) => {
            return Err(PipelineFailure {
                partial: PipelineReport::default(),
                cause,
            })
        }
    };
    for component in components {
        if let Err(cause) = runner.push_component(&component) {
            return Err(PipelineFailure {
                partial: runner.snapshot(),
                cause,
            });
        }
    }
    let partial = runner.snapshot();
    runner
        .finish()
        .map_err(|cause| PipelineFailure { partial, cause })
}
