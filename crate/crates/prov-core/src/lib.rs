//! Provenance ingest and query engine.
//!
//! Provenance graphs (entities, activities, agents and the relations
//! between them) are stored in an embedded sorted key-value store using an
//! exploded schema: one table for nodes, one for edges, and a transpose of
//! the edge table so edges can be found by endpoint with a single row scan.
//! Events stream in over a line protocol, are translated to graph
//! components, spooled to tab-separated batch files, and bulk-loaded; a
//! filtered breadth-first traversal answers "which inputs produced this
//! output" one store query per hop.

pub mod analytics;
pub mod codec;
pub mod error;
pub mod gen;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sample;
pub mod service;
pub mod store;

pub use codec::{KvEntry, TableId};
pub use error::{Error, Result};
pub use model::{Component, EdgeType, NodeKind, ProvEdge, ProvGraph, ProvNode};
pub use store::Store;
