//! TCP front-end: accepts line-protocol event streams from any number of
//! collector connections and feeds them through one shared ingest pipeline.
//!
//! Wire format, one event per LF-terminated line:
//!
//! ```text
//! source_id <TAB> event_id <TAB> etype <TAB> subject <TAB> object <TAB> timestamp <TAB> mode
//! ```
//!
//! Valid lines are acknowledged by silence; a malformed line draws
//! `NAK <line> <reason>` and the connection stays open until too many
//! arrive in a row. Connection handlers block on a bounded queue when the
//! pipeline falls behind, which back-pressures the sender through TCP.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, SyncSender};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;

use crate::error::{Error, Result};
use crate::pipeline::{EventRecord, PipelineConfig, PipelineReport, PipelineRunner};
use crate::store::Store;

/// One event on the wire, tagged with the collector it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireEvent {
    pub source_id: String,
    pub event: EventRecord,
}

impl WireEvent {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.source_id,
            self.event.event_id,
            self.event.kind,
            self.event.subject,
            self.event.object,
            self.event.timestamp_us,
            self.event.mode.as_str()
        )
    }

    pub fn parse_line(line: &str) -> Result<WireEvent> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::InvalidEntry(format!(
                "expected 7 fields, got {}",
                fields.len()
            )));
        }
        let source_id = fields[0];
        if source_id.is_empty() {
            return Err(Error::InvalidEntry("empty source id".to_string()));
        }
        let event_id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::InvalidEntry(format!("bad event id {:?}", fields[1])))?;
        let kind = fields[2]
            .parse()
            .map_err(|_| Error::InvalidEntry(format!("unknown event type {:?}", fields[2])))?;
        for (label, value) in [("subject", fields[3]), ("object", fields[4])] {
            if value.contains(['|', ':']) {
                return Err(Error::InvalidEntry(format!(
                    "{label} contains a reserved character: {value:?}"
                )));
            }
        }
        let timestamp_us: u64 = fields[5]
            .parse()
            .map_err(|_| Error::InvalidEntry(format!("bad timestamp {:?}", fields[5])))?;
        let mode = fields[6]
            .parse()
            .map_err(|_| Error::InvalidEntry(format!("unknown mode {:?}", fields[6])))?;
        Ok(WireEvent {
            source_id: source_id.to_string(),
            event: EventRecord {
                event_id,
                kind,
                subject: fields[3].to_string(),
                object: fields[4].to_string(),
                timestamp_us,
                mode,
            },
        })
    }
}

/// Service tuning.
#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Capacity of the merged event queue feeding the pipeline.
    pub queue_capacity: usize,
    /// Consecutive NAKs after which a connection is closed.
    pub max_consecutive_naks: u64,
}

impl Default for ServiceConfig {
    fn default() -> ServiceConfig {
        ServiceConfig {
            queue_capacity: 1024,
            max_consecutive_naks: 8,
        }
    }
}

/// Per-source acceptance counters. The checksum is the wrapping sum of
/// accepted event ids, for cheap duplicate/loss detection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SourceStats {
    pub events: u64,
    pub id_checksum: u64,
}

/// Final account of one service run.
#[derive(Debug)]
pub struct ServeReport {
    pub pipeline: PipelineReport,
    pub accepted: u64,
    pub naks: u64,
    pub connections: u64,
    pub per_source: BTreeMap<String, SourceStats>,
}

#[derive(Default)]
struct Counters {
    accepted: AtomicU64,
    naks: AtomicU64,
    connections: AtomicU64,
    per_source: Mutex<BTreeMap<String, SourceStats>>,
}

/// A running service; call [`RunningServer::shutdown`] to stop accepting,
/// drain in-flight events, complete the tail batch, and collect the report.
pub struct RunningServer {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_handle: JoinHandle<()>,
    consumer_handle: JoinHandle<Result<PipelineReport>>,
    counters: Arc<Counters>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(self) -> Result<ServeReport> {
        self.stop.store(true, Ordering::Release);
        // Unblock the accept loop with a throwaway connection.
        let _ = TcpStream::connect(self.local_addr);
        self.accept_handle
            .join()
            .map_err(|_| Error::io("accept thread panicked", other_io()))?;
        let pipeline = self
            .consumer_handle
            .join()
            .map_err(|_| Error::io("pipeline thread panicked", other_io()))??;
        Ok(ServeReport {
            pipeline,
            accepted: self.counters.accepted.load(Ordering::Relaxed),
            naks: self.counters.naks.load(Ordering::Relaxed),
            connections: self.counters.connections.load(Ordering::Relaxed),
            per_source: self.counters.per_source.lock().expect("counters").clone(),
        })
    }
}

fn other_io() -> std::io::Error {
    std::io::Error::other("thread panicked")
}

/// Binds `listen_addr` and serves until shutdown. Events from all
/// connections merge into one bounded queue consumed by a single pipeline
/// writer, so per-source order is preserved and the store sees one writer.
pub fn serve(
    listen_addr: impl ToSocketAddrs,
    store: Arc<Store>,
    pipeline_config: PipelineConfig,
    service_config: ServiceConfig,
) -> Result<RunningServer> {
    let listener =
        TcpListener::bind(listen_addr).map_err(|e| Error::io("bind listen address", e))?;
    let local_addr = listener
        .local_addr()
        .map_err(|e| Error::io("resolve local address", e))?;
    let stop = Arc::new(AtomicBool::new(false));
    let counters = Arc::new(Counters::default());
    let (tx, rx) = mpsc::sync_channel::<(String, EventRecord)>(service_config.queue_capacity);

    let consumer_handle = {
        let store = Arc::clone(&store);
        std::thread::spawn(move || consume(rx, &store, &pipeline_config))
    };

    let accept_handle = {
        let stop = Arc::clone(&stop);
        let counters = Arc::clone(&counters);
        std::thread::spawn(move || {
            let mut handlers: Vec<JoinHandle<()>> = Vec::new();
            for stream in listener.incoming() {
                if stop.load(Ordering::Acquire) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                counters.connections.fetch_add(1, Ordering::Relaxed);
                let tx = tx.clone();
                let counters = Arc::clone(&counters);
                let max_naks = service_config.max_consecutive_naks;
                handlers.push(std::thread::spawn(move || {
                    handle_connection(stream, tx, &counters, max_naks);
                }));
            }
            for handle in handlers {
                let _ = handle.join();
            }
            // tx drops here; the consumer drains the queue and finishes.
        })
    };

    Ok(RunningServer {
        local_addr,
        stop,
        accept_handle,
        consumer_handle,
        counters,
    })
}

fn consume(
    rx: Receiver<(String, EventRecord)>,
    store: &Store,
    config: &PipelineConfig,
) -> Result<PipelineReport> {
    let mut runner = PipelineRunner::new(store, config)?;
    while let Ok((_source, event)) = rx.recv() {
        runner.push_event(&event)?;
    }
    runner.finish()
}

fn handle_connection(
    stream: TcpStream,
    tx: SyncSender<(String, EventRecord)>,
    counters: &Counters,
    max_consecutive_naks: u64,
) {
    let reader = BufReader::new(match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    });
    let mut writer = BufWriter::new(stream);
    let mut consecutive_naks = 0u64;
    for (idx, line) in reader.lines().enumerate() {
        let Ok(line) = line else { break };
        match WireEvent::parse_line(&line) {
            Ok(wire) => {
                consecutive_naks = 0;
                counters.accepted.fetch_add(1, Ordering::Relaxed);
                {
                    let mut per_source = counters.per_source.lock().expect("counters");
                    let stats = per_source.entry(wire.source_id.clone()).or_default();
                    stats.events += 1;
                    stats.id_checksum = stats.id_checksum.wrapping_add(wire.event.event_id);
                }
                if tx.send((wire.source_id, wire.event)).is_err() {
                    break; // pipeline gone; nothing more to accept
                }
            }
            Err(reason) => {
                counters.naks.fetch_add(1, Ordering::Relaxed);
                consecutive_naks += 1;
                let nak = format!("NAK {} {}\n", idx + 1, nak_reason(&reason));
                if writer.write_all(nak.as_bytes()).is_err() || writer.flush().is_err() {
                    break;
                }
                if consecutive_naks > max_consecutive_naks {
                    break;
                }
            }
        }
    }
    let _ = writer.flush();
    if let Ok(stream) = writer.into_inner() {
        let _ = stream.shutdown(Shutdown::Both);
    }
}

fn nak_reason(err: &Error) -> String {
    match err {
        Error::InvalidEntry(reason) => reason.clone(),
        other => other.to_string(),
    }
}

/// Summary returned by [`client_send`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClientSummary {
    pub sent: u64,
    pub accepted: u64,
    pub naks: u64,
}

/// Sends events to a running service and reports how many were accepted.
/// Acceptance is implicit (silence), so the count is sent minus NAKs read
/// back after the write side closes.
pub fn client_send<'a, I>(addr: impl ToSocketAddrs, events: I) -> Result<ClientSummary>
where
    I: IntoIterator<Item = &'a WireEvent>,
{
    let stream = TcpStream::connect(addr).map_err(|e| match e.kind() {
        std::io::ErrorKind::ConnectionRefused => Error::ConnectionRefused(e.to_string()),
        _ => Error::io("connect", e),
    })?;
    let reader = BufReader::new(
        stream
            .try_clone()
            .map_err(|e| Error::io("clone stream", e))?,
    );
    let mut writer = BufWriter::new(stream);
    let mut sent = 0u64;
    for event in events {
        let mut line = event.to_line();
        line.push('\n');
        writer.write_all(line.as_bytes()).map_err(reset_or_io)?;
        sent += 1;
    }
    writer.flush().map_err(reset_or_io)?;
    let stream = writer
        .into_inner()
        .map_err(|e| Error::io("flush", e.into_error()))?;
    stream
        .shutdown(Shutdown::Write)
        .map_err(|e| Error::io("shutdown write half", e))?;
    let mut naks = 0u64;
    for line in reader.lines() {
        let line = line.map_err(reset_or_io)?;
        if line.starts_with("NAK ") {
            naks += 1;
        }
    }
    Ok(ClientSummary {
        sent,
        accepted: sent - naks,
        naks,
    })
}

fn reset_or_io(e: std::io::Error) -> Error {
    match e.kind() {
        std::io::ErrorKind::ConnectionReset | std::io::ErrorKind::BrokenPipe => {
            Error::ConnectionReset
        }
        _ => Error::io("stream", e),
    }
}
