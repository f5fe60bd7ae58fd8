//! Embedded sorted key-value store with three fixed tables.
//!
//! Each table is an ordered map from (row, column) to value, scanned in
//! lexicographic byte order. One writer mutates; any number of readers may
//! scan concurrently, and a batch becomes visible atomically. Persistence is
//! a whole-table TSV snapshot per table plus a `MANIFEST` recording the
//! format version and entry counts; snapshots are written to temporary files
//! and renamed into place so an interrupted flush leaves the previous
//! snapshot intact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use crate::codec::{parse_tsv, KvEntry, TableId};
use crate::error::{Error, Result};

const MANIFEST_FILE: &str = "MANIFEST";
const FORMAT_LINE: &str = "prov-store 1";

type Table = BTreeMap<(String, String), String>;

/// Entry and distinct-row counts for one table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TableStats {
    pub entries: usize,
    pub distinct_rows: usize,
}

/// Accounting for one or more ingested batches.
#[derive(Clone, Copy, Debug, Default)]
pub struct IngestStats {
    pub entries_written: u64,
    pub batches: u64,
    /// Graph components loaded: one per node row plus one per edge row.
    pub components: u64,
    pub wall: Duration,
}

impl IngestStats {
    pub fn components_per_sec(&self) -> f64 {
        let secs = self.wall.as_secs_f64();
        if secs > 0.0 {
            self.components as f64 / secs
        } else {
            0.0
        }
    }

    pub fn merge(&mut self, other: &IngestStats) {
        self.entries_written += other.entries_written;
        self.batches += other.batches;
        self.components += other.components;
        self.wall += other.wall;
    }

    pub fn summary(&self) -> String {
        format!(
            "ingested {} batches, {} entries, {} components in {:.3}s ({:.1} components/s)",
            self.batches,
            self.entries_written,
            self.components,
            self.wall.as_secs_f64(),
            self.components_per_sec()
        )
    }
}

/// The store handle: three in-memory sorted tables with optional snapshot
/// persistence under a root directory.
pub struct Store {
    root: Option<PathBuf>,
    tables: [RwLock<Table>; 3],
    scans: AtomicU64,
    sealed: AtomicBool,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = f.debug_struct("Store");
        s.field("root", &self.root);
        for table in TableId::ALL {
            s.field(table.as_str(), &self.table_stats(table).entries);
        }
        s.finish()
    }
}

impl Store {
    /// A store with no persistence path; [`Store::flush`] will fail.
    pub fn in_memory() -> Store {
        Store {
            root: None,
            tables: Default::default(),
            scans: AtomicU64::new(0),
            sealed: AtomicBool::new(false),
        }
    }

    /// Opens a store rooted at `path`, loading the existing snapshot if one
    /// is present. A missing directory is created; a damaged snapshot is a
    /// load error and leaves no partial state behind.
    pub fn open(path: impl Into<PathBuf>) -> Result<Store> {
        let root = path.into();
        fs::create_dir_all(&root)
            .map_err(|e| Error::io(format!("create store dir {}", root.display()), e))?;
        let manifest_path = root.join(MANIFEST_FILE);
        let mut tables: [Table; 3] = Default::default();
        if manifest_path.exists() {
            let counts = read_manifest(&manifest_path)?;
            for table in TableId::ALL {
                let path = root.join(format!("{table}.tsv"));
                let loaded = load_table(&path)?;
                if loaded.len() != counts[table.index()] {
                    return Err(Error::CorruptSnapshot {
                        path,
                        reason: format!(
                            "manifest records {} entries, file has {}",
                            counts[table.index()],
                            loaded.len()
                        ),
                    });
                }
                tables[table.index()] = loaded;
            }
        }
        let [t0, t1, t2] = tables;
        Ok(Store {
            root: Some(root),
            tables: [RwLock::new(t0), RwLock::new(t1), RwLock::new(t2)],
            scans: AtomicU64::new(0),
            sealed: AtomicBool::new(false),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    /// Applies a batch of entries to one table. The whole batch becomes
    /// visible to readers at once; duplicate (row, col) keys keep the last
    /// value. Returns the number of entries written.
    pub fn put_batch(&self, table: TableId, entries: &[KvEntry]) -> Result<usize> {
        self.put_batch_owned(table, entries.to_vec())
    }

    /// [`Store::put_batch`] without the copy; the hot ingest path hands the
    /// parsed entries over by value.
    pub fn put_batch_owned(&self, table: TableId, entries: Vec<KvEntry>) -> Result<usize> {
        if self.sealed.load(Ordering::Acquire) {
            return Err(Error::StoreSealed);
        }
        let count = entries.len();
        let mut map = self.tables[table.index()].write().expect("store lock");
        for entry in entries {
            map.insert((entry.row, entry.col), entry.val);
        }
        Ok(count)
    }

    /// Rejects all further writes. In-flight readers are unaffected.
    pub fn seal(&self) {
        self.sealed.store(true, Ordering::Release);
    }

    /// Entries whose row equals `row`, in column order.
    pub fn scan_row(&self, table: TableId, row: &str) -> Vec<KvEntry> {
        self.scans.fetch_add(1, Ordering::Relaxed);
        let map = self.tables[table.index()].read().expect("store lock");
        collect_row(&map, row)
    }

    /// One batched scan over several rows; results are sorted by (row, col).
    /// Counts as a single store scan regardless of the number of rows, the
    /// way one round-trip query with a row list would.
    pub fn scan_rows<I>(&self, table: TableId, rows: I) -> Vec<KvEntry>
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        self.scans.fetch_add(1, Ordering::Relaxed);
        let map = self.tables[table.index()].read().expect("store lock");
        let mut wanted: Vec<String> = rows.into_iter().map(|r| r.as_ref().to_string()).collect();
        wanted.sort();
        wanted.dedup();
        let mut out = Vec::new();
        for row in &wanted {
            out.extend(collect_row(&map, row));
        }
        out
    }

    /// Entries whose row starts with `prefix`, sorted by (row, col). An
    /// empty prefix scans the whole table.
    pub fn scan_prefix(&self, table: TableId, prefix: &str) -> Vec<KvEntry> {
        self.scans.fetch_add(1, Ordering::Relaxed);
        let map = self.tables[table.index()].read().expect("store lock");
        map.range((prefix.to_string(), String::new())..)
            .take_while(|((row, _), _)| row.starts_with(prefix))
            .map(|((row, col), val)| KvEntry {
                row: row.clone(),
                col: col.clone(),
                val: val.clone(),
            })
            .collect()
    }

    /// Full sorted contents of a table.
    pub fn dump(&self, table: TableId) -> Vec<KvEntry> {
        self.scan_prefix(table, "")
    }

    /// Entry and distinct-row counts; bookkeeping only, not counted as a scan.
    pub fn table_stats(&self, table: TableId) -> TableStats {
        let map = self.tables[table.index()].read().expect("store lock");
        let mut distinct_rows = 0;
        let mut last: Option<&str> = None;
        for (row, _) in map.keys() {
            if last != Some(row.as_str()) {
                distinct_rows += 1;
                last = Some(row.as_str());
            }
        }
        TableStats {
            entries: map.len(),
            distinct_rows,
        }
    }

    /// Number of scan operations performed since the store was opened.
    pub fn scan_count(&self) -> u64 {
        self.scans.load(Ordering::Relaxed)
    }

    /// Writes a durable snapshot of all tables. Temp files are fully written
    /// before any rename, so a failure before the commit point leaves the
    /// previous snapshot untouched.
    pub fn flush(&self) -> Result<()> {
        self.prepare_snapshot()?;
        self.commit_snapshot()
    }

    fn snapshot_root(&self) -> Result<&Path> {
        self.root.as_deref().ok_or(Error::NoPersistencePath)
    }

    fn prepare_snapshot(&self) -> Result<()> {
        let root = self.snapshot_root()?;
        let mut counts = [0usize; 3];
        for table in TableId::ALL {
            let map = self.tables[table.index()].read().expect("store lock");
            counts[table.index()] = map.len();
            let tmp = root.join(format!("{table}.tsv.tmp"));
            let file = fs::File::create(&tmp)
                .map_err(|e| Error::io(format!("create {}", tmp.display()), e))?;
            let mut writer = BufWriter::new(file);
            for ((row, col), val) in map.iter() {
                writer
                    .write_all(format!("{row}\t{col}\t{val}\n").as_bytes())
                    .map_err(|e| Error::io(format!("write {}", tmp.display()), e))?;
            }
            writer
                .flush()
                .map_err(|e| Error::io(format!("flush {}", tmp.display()), e))?;
        }
        let manifest_tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
        let mut manifest = String::from(FORMAT_LINE);
        manifest.push('\n');
        for table in TableId::ALL {
            manifest.push_str(&format!("{table} {}\n", counts[table.index()]));
        }
        fs::write(&manifest_tmp, manifest)
            .map_err(|e| Error::io(format!("write {}", manifest_tmp.display()), e))?;
        Ok(())
    }

    fn commit_snapshot(&self) -> Result<()> {
        let root = self.snapshot_root()?;
        for table in TableId::ALL {
            let tmp = root.join(format!("{table}.tsv.tmp"));
            let target = root.join(format!("{table}.tsv"));
            fs::rename(&tmp, &target)
                .map_err(|e| Error::io(format!("rename {}", target.display()), e))?;
        }
        let tmp = root.join(format!("{MANIFEST_FILE}.tmp"));
        let target = root.join(MANIFEST_FILE);
        fs::rename(&tmp, &target)
            .map_err(|e| Error::io(format!("rename {}", target.display()), e))?;
        Ok(())
    }
}

fn collect_row(map: &Table, row: &str) -> Vec<KvEntry> {
    map.range((row.to_string(), String::new())..)
        .take_while(|((r, _), _)| r == row)
        .map(|((r, col), val)| KvEntry {
            row: r.clone(),
            col: col.clone(),
            val: val.clone(),
        })
        .collect()
}

fn load_table(path: &Path) -> Result<Table> {
    let file = fs::File::open(path).map_err(|e| Error::CorruptSnapshot {
        path: path.to_path_buf(),
        reason: format!("missing or unreadable table file: {e}"),
    })?;
    let entries = parse_tsv(BufReader::new(file)).map_err(|e| Error::CorruptSnapshot {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut map = Table::new();
    for entry in entries {
        if map.insert((entry.row, entry.col), entry.val).is_some() {
            return Err(Error::CorruptSnapshot {
                path: path.to_path_buf(),
                reason: "duplicate (row, col) key".to_string(),
            });
        }
    }
    Ok(map)
}

fn read_manifest(path: &Path) -> Result<[usize; 3]> {
    let raw = fs::read_to_string(path).map_err(|e| Error::CorruptSnapshot {
        path: path.to_path_buf(),
        reason: format!("unreadable manifest: {e}"),
    })?;
    let mut lines = raw.lines();
    if lines.next() != Some(FORMAT_LINE) {
        return Err(Error::CorruptSnapshot {
            path: path.to_path_buf(),
            reason: "unknown snapshot format".to_string(),
        });
    }
    let mut counts = [0usize; 3];
    let mut seen = [false; 3];
    for line in lines {
        let (name, count) = line.split_once(' ').ok_or_else(|| Error::CorruptSnapshot {
            path: path.to_path_buf(),
            reason: format!("malformed manifest line {line:?}"),
        })?;
        let table: TableId = name.parse().map_err(|_| Error::CorruptSnapshot {
            path: path.to_path_buf(),
            reason: format!("unknown table {name:?} in manifest"),
        })?;
        counts[table.index()] = count.parse().map_err(|_| Error::CorruptSnapshot {
            path: path.to_path_buf(),
            reason: format!("bad count in manifest line {line:?}"),
        })?;
        seen[table.index()] = true;
    }
    if seen != [true; 3] {
        return Err(Error::CorruptSnapshot {
            path: path.to_path_buf(),
            reason: "manifest missing a table".to_string(),
        });
    }
    Ok(counts)
}

/// Reads the raw bytes of every snapshot file, for byte-identity checks.
pub fn snapshot_bytes(root: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for table in TableId::ALL {
        let path = root.join(format!("{table}.tsv"));
        let bytes =
            fs::read(&path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        out.push((format!("{table}.tsv"), bytes));
    }
    let manifest = root.join(MANIFEST_FILE);
    let bytes =
        fs::read(&manifest).map_err(|e| Error::io(format!("read {}", manifest.display()), e))?;
    out.push((MANIFEST_FILE.to_string(), bytes));
    Ok(out)
}
