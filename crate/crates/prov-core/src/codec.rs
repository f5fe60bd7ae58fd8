//! Exploded-schema codec: graph components to and from (row, column, value)
//! entries, plus the tab-separated batch file format.
//!
//! Every attribute value becomes its own column with the value `"1"`, so
//! attribute lookups are plain key scans. A node encodes as one entry per
//! attribute; an edge encodes as exactly five entries (tab-separated on
//! disk):
//!
//! ```text
//! wgb-2  :inNode|AC2                   1
//! wgb-2  :inType|PROV_GENERATION|AC2   1
//! wgb-2  :outNode|EN6                  1
//! wgb-2  :outType|PROV_GENERATION|EN6  1
//! wgb-2  :type|PROV_GENERATION         1
//! ```
//!
//! The transpose form swaps row and column of each edge entry so edges can
//! be found by endpoint with a single row scan.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{EdgeType, NodeKind, ProvEdge, ProvNode};

/// One sorted-store triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KvEntry {
    pub row: String,
    pub col: String,
    pub val: String,
}

impl KvEntry {
    pub fn new(
        row: impl Into<String>,
        col: impl Into<String>,
        val: impl Into<String>,
    ) -> Result<KvEntry> {
        let entry = KvEntry {
            row: row.into(),
            col: col.into(),
            val: val.into(),
        };
        if entry.row.is_empty() || entry.col.is_empty() {
            return Err(Error::InvalidEntry(format!(
                "empty row or column in ({:?}, {:?}, {:?})",
                entry.row, entry.col, entry.val
            )));
        }
        for field in [&entry.row, &entry.col, &entry.val] {
            if field.contains(['\t', '\n']) {
                return Err(Error::InvalidEntry(format!(
                    "tab or newline in ({:?}, {:?}, {:?})",
                    entry.row, entry.col, entry.val
                )));
            }
        }
        Ok(entry)
    }

    /// Swapped (row, col) form for the transpose table.
    pub fn transposed(&self) -> KvEntry {
        KvEntry {
            row: self.col.clone(),
            col: self.row.clone(),
            val: self.val.clone(),
        }
    }
}

impl fmt::Display for KvEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.row, self.col, self.val)
    }
}

/// The three logical tables of the schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TableId {
    Node,
    Edge,
    EdgeTranspose,
}

impl TableId {
    pub const ALL: [TableId; 3] = [TableId::Node, TableId::Edge, TableId::EdgeTranspose];

    pub fn as_str(self) -> &'static str {
        match self {
            TableId::Node => "node",
            TableId::Edge => "edge",
            TableId::EdgeTranspose => "edgeT",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            TableId::Node => 0,
            TableId::Edge => 1,
            TableId::EdgeTranspose => 2,
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<TableId> {
        TableId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown table {s:?}")))
    }
}

/// File name for one table of a spooled batch: `batch-00007-edge.tsv`.
pub fn batch_file_name(seq: u64, table: TableId) -> String {
    format!("batch-{seq:05}-{}.tsv", table.as_str())
}

/// Encodes a node: the `:type` entry first, then one entry per attribute in
/// attribute order.
pub fn encode_node(node: &ProvNode) -> Vec<KvEntry> {
    let mut entries = Vec::with_capacity(1 + node.attributes().len());
    entries.push(KvEntry {
        row: node.id().to_string(),
        col: format!(":type|{}", node.kind().render()),
        val: "1".to_string(),
    });
    for (name, value) in node.attributes() {
        entries.push(KvEntry {
            row: node.id().to_string(),
            col: format!(":{name}|{value}"),
            val: "1".to_string(),
        });
    }
    entries
}

/// The five edge-table entries plus their transpose-table counterparts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeEntries {
    pub edge: Vec<KvEntry>,
    pub transpose: Vec<KvEntry>,
}

/// Encodes an edge in fixed column order (alphabetical): `:inNode`,
/// `:inType`, `:outNode`, `:outType`, `:type`.
pub fn encode_edge(edge: &ProvEdge) -> EdgeEntries {
    let id = edge.id();
    let render = edge.etype().render();
    let cols = [
        format!(":inNode|{}", edge.in_node()),
        format!(":inType|{render}|{}", edge.in_node()),
        format!(":outNode|{}", edge.out_node()),
        format!(":outType|{render}|{}", edge.out_node()),
        format!(":type|{render}"),
    ];
    let entries: Vec<KvEntry> = cols
        .into_iter()
        .map(|col| KvEntry {
            row: id.to_string(),
            col,
            val: "1".to_string(),
        })
        .collect();
    let transpose = entries.iter().map(KvEntry::transposed).collect();
    EdgeEntries {
        edge: entries,
        transpose,
    }
}

/// Row label used in the transpose table for "edges whose descendant is
/// `node_id`".
pub fn out_node_label(node_id: &str) -> String {
    format!(":outNode|{node_id}")
}

fn split_column(col: &str) -> Result<(&str, &str)> {
    col.strip_prefix(':')
        .and_then(|rest| rest.split_once('|'))
        .ok_or_else(|| Error::Decode(format!("malformed column {col:?}")))
}

fn single_row(entries: &[KvEntry]) -> Result<&str> {
    let first = entries
        .first()
        .ok_or_else(|| Error::Decode("empty entry set".to_string()))?;
    for entry in entries {
        if entry.row != first.row {
            return Err(Error::Decode(format!(
                "mixed rows {:?} and {:?}",
                first.row, entry.row
            )));
        }
    }
    Ok(&first.row)
}

/// Reconstructs a node from its table entries (inverse of [`encode_node`]).
pub fn decode_node_entries(entries: &[KvEntry]) -> Result<ProvNode> {
    let row = single_row(entries)?;
    let mut kind = None;
    let mut attrs: Vec<(&str, &str)> = Vec::new();
    for entry in entries {
        let (name, value) = split_column(&entry.col)?;
        if name == "type" {
            if kind.is_some() {
                return Err(Error::Decode(format!(
                    "node {row:?} has more than one :type column"
                )));
            }
            kind = Some(NodeKind::from_render(value).ok_or_else(|| {
                Error::Decode(format!("unknown node kind {value:?} in row {row:?}"))
            })?);
        } else {
            attrs.push((name, value));
        }
    }
    let kind = kind.ok_or_else(|| Error::Decode(format!("node {row:?} has no :type column")))?;
    let mut node = ProvNode::new(row, kind)?;
    for (name, value) in attrs {
        node = node.with_attribute(name, value)?;
    }
    Ok(node)
}

/// Reconstructs an edge from its edge-table entries (inverse of
/// [`encode_edge`]). `:inType`/`:outType` columns are cross-checked against
/// `:type` when present.
pub fn decode_edge_entries(entries: &[KvEntry]) -> Result<ProvEdge> {
    let row = single_row(entries)?;
    let mut in_node = None;
    let mut out_node = None;
    let mut etype = None;
    let mut in_type = None;
    let mut out_type = None;
    for entry in entries {
        let (name, value) = split_column(&entry.col)?;
        let slot = match name {
            "inNode" => &mut in_node,
            "outNode" => &mut out_node,
            "type" => &mut etype,
            "inType" => &mut in_type,
            "outType" => &mut out_type,
            other => {
                return Err(Error::Decode(format!(
                    "unexpected column :{other}|... in edge row {row:?}"
                )))
            }
        };
        if slot.replace(value).is_some() {
            return Err(Error::Decode(format!(
                "duplicate :{name} column in edge row {row:?}"
            )));
        }
    }
    let in_node =
        in_node.ok_or_else(|| Error::Decode(format!("edge {row:?} missing :inNode column")))?;
    let out_node =
        out_node.ok_or_else(|| Error::Decode(format!("edge {row:?} missing :outNode column")))?;
    let type_render =
        etype.ok_or_else(|| Error::Decode(format!("edge {row:?} missing :type column")))?;
    let etype = EdgeType::from_render(type_render)
        .ok_or_else(|| Error::Decode(format!("unknown edge type {type_render:?} in {row:?}")))?;
    for (label, combined, node) in [
        ("inType", in_type, in_node),
        ("outType", out_type, out_node),
    ] {
        if let Some(combined) = combined {
            let expected = format!("{type_render}|{node}");
            if combined != expected {
                return Err(Error::Decode(format!(
                    "inconsistent :{label} column in edge row {row:?}: {combined:?} vs {expected:?}"
                )));
            }
        }
    }
    ProvEdge::new(row, etype, in_node, out_node)
}

/// Writes entries as `row <TAB> col <TAB> val <LF>` lines, in input order.
/// Returns the number of bytes written.
pub fn write_tsv<'a, W, I>(entries: I, sink: &mut W) -> Result<u64>
where
    W: Write,
    I: IntoIterator<Item = &'a KvEntry>,
{
    let mut bytes = 0u64;
    for entry in entries {
        for (field, sep) in [
            (&entry.row, b'\t'),
            (&entry.col, b'\t'),
            (&entry.val, b'\n'),
        ] {
            sink.write_all(field.as_bytes())
                .and_then(|()| sink.write_all(&[sep]))
                .map_err(|e| Error::io("tsv write", e))?;
        }
        bytes += (entry.row.len() + entry.col.len() + entry.val.len() + 3) as u64;
    }
    Ok(bytes)
}

/// Parses `row <TAB> col <TAB> val` lines in file order, validating three
/// fields per line and the entry invariants.
pub fn parse_tsv<R: BufRead>(mut source: R) -> Result<Vec<KvEntry>> {
    let mut entries = Vec::new();
    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line_no += 1;
        line.clear();
        let read = source
            .read_line(&mut line)
            .map_err(|e| Error::io(format!("tsv read at line {line_no}"), e))?;
        if read == 0 {
            return Ok(entries);
        }
        let trimmed = line.strip_suffix('\n').unwrap_or(&line);
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split('\t');
        let entry = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(row), Some(col), Some(val), None) => {
                KvEntry::new(row, col, val).map_err(|e| Error::Parse {
                    line: line_no,
                    reason: e.to_string(),
                })?
            }
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!(
                        "expected 3 tab-separated fields, got {}",
                        trimmed.split('\t').count()
                    ),
                })
            }
        };
        entries.push(entry);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeKind;

    fn entry(row: &str, col: &str) -> KvEntry {
        KvEntry::new(row, col, "1").unwrap()
    }

    #[test]
    fn encode_node_emits_type_column() {
        let ac0 = ProvNode::new("AC0", NodeKind::Activity).unwrap();
        assert_eq!(encode_node(&ac0), vec![entry("AC0", ":type|PROV_ACTIVITY")]);
        let en7 = ProvNode::new("EN7", NodeKind::Entity).unwrap();
        assert_eq!(encode_node(&en7), vec![entry("EN7", ":type|PROV_ENTITY")]);
        let ag0 = ProvNode::new("AG0", NodeKind::Agent).unwrap();
        assert_eq!(encode_node(&ag0), vec![entry("AG0", ":type|PROV_AGENT")]);
    }

    #[test]
    fn encode_node_appends_attributes_in_order() {
        let node = ProvNode::new("EN1", NodeKind::Entity)
            .unwrap()
            .with_attribute("path", "/tmp/out")
            .unwrap()
            .with_attribute("owner", "root")
            .unwrap();
        assert_eq!(
            encode_node(&node),
            vec![
                entry("EN1", ":type|PROV_ENTITY"),
                entry("EN1", ":path|/tmp/out"),
                entry("EN1", ":owner|root"),
            ]
        );
    }

    #[test]
    fn encode_edge_matches_schema_layout() {
        let edge = ProvEdge::new("wgb-2", EdgeType::Generation, "AC2", "EN6").unwrap();
        let encoded = encode_edge(&edge);
        assert_eq!(
            encoded.edge,
            vec![
                entry("wgb-2", ":inNode|AC2"),
                entry("wgb-2", ":inType|PROV_GENERATION|AC2"),
                entry("wgb-2", ":outNode|EN6"),
                entry("wgb-2", ":outType|PROV_GENERATION|EN6"),
                entry("wgb-2", ":type|PROV_GENERATION"),
            ]
        );
        assert_eq!(encoded.transpose[0], entry(":inNode|AC2", "wgb-2"));
        assert_eq!(encoded.transpose.len(), encoded.edge.len());
        for (fwd, rev) in encoded.edge.iter().zip(&encoded.transpose) {
            assert_eq!(rev.row, fwd.col);
            assert_eq!(rev.col, fwd.row);
            assert_eq!(rev.val, fwd.val);
        }
    }

    #[test]
    fn decode_node_roundtrip_and_errors() {
        let en3 = decode_node_entries(&[entry("EN3", ":type|PROV_ENTITY")]).unwrap();
        assert_eq!(en3.id(), "EN3");
        assert_eq!(en3.kind(), NodeKind::Entity);

        match decode_node_entries(&[]) {
            Err(Error::Decode(reason)) => assert!(reason.contains("empty entry set")),
            other => panic!("expected decode error, got {other:?}"),
        }
        assert!(decode_node_entries(&[entry("EN3", ":path|x")]).is_err());
        assert!(decode_node_entries(&[
            entry("EN3", ":type|PROV_ENTITY"),
            entry("EN4", ":type|PROV_ENTITY"),
        ])
        .is_err());
        assert!(decode_node_entries(&[entry("EN3", ":type|WHAT")]).is_err());
    }

    #[test]
    fn decode_edge_from_schema_rows() {
        let rows = [
            entry("wgb-3", ":inNode|AC2"),
            entry("wgb-3", ":inType|PROV_GENERATION|AC2"),
            entry("wgb-3", ":outNode|EN7"),
            entry("wgb-3", ":outType|PROV_GENERATION|EN7"),
            entry("wgb-3", ":type|PROV_GENERATION"),
        ];
        let edge = decode_edge_entries(&rows).unwrap();
        assert_eq!(edge.id(), "wgb-3");
        assert_eq!(edge.etype(), EdgeType::Generation);
        assert_eq!(edge.in_node(), "AC2");
        assert_eq!(edge.out_node(), "EN7");
    }

    #[test]
    fn decode_edge_missing_or_inconsistent_columns() {
        let missing = [
            entry("wgb-3", ":inNode|AC2"),
            entry("wgb-3", ":type|PROV_GENERATION"),
        ];
        match decode_edge_entries(&missing) {
            Err(Error::Decode(reason)) => assert!(reason.contains(":outNode"), "{reason}"),
            other => panic!("expected decode error, got {other:?}"),
        }
        let inconsistent = [
            entry("wgb-3", ":inNode|AC2"),
            entry("wgb-3", ":inType|PROV_USAGE|AC2"),
            entry("wgb-3", ":outNode|EN7"),
            entry("wgb-3", ":type|PROV_GENERATION"),
        ];
        match decode_edge_entries(&inconsistent) {
            Err(Error::Decode(reason)) => assert!(reason.contains("inconsistent"), "{reason}"),
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn write_tsv_format_and_byte_count() {
        let mut buf = Vec::new();
        let entries = [entry("AC0", ":type|PROV_ACTIVITY")];
        let n = write_tsv(entries.iter(), &mut buf).unwrap();
        assert_eq!(buf, b"AC0\t:type|PROV_ACTIVITY\t1\n");
        assert_eq!(n, buf.len() as u64);

        let mut empty = Vec::new();
        assert_eq!(write_tsv([].iter(), &mut empty).unwrap(), 0);
        assert!(empty.is_empty());
    }

    #[test]
    fn parse_tsv_rejects_bad_field_counts() {
        let err = parse_tsv("a\tb\t1\nowner\tonly-two\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, reason } => {
                assert_eq!(line, 2);
                assert!(reason.contains("expected 3"), "{reason}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(parse_tsv("".as_bytes()).unwrap().is_empty());
        assert!(matches!(
            parse_tsv("\tb\t1\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn batch_file_names_are_zero_padded() {
        assert_eq!(batch_file_name(7, TableId::Edge), "batch-00007-edge.tsv");
        assert_eq!(
            batch_file_name(0, TableId::EdgeTranspose),
            "batch-00000-edgeT.tsv"
        );
    }
}
