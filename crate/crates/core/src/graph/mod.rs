//! Domain-level graph construction: per-batch aggregation, external merge,
//! node dictionary and the binary edge-list format.

pub mod batch;
pub mod dictionary;
pub mod edges;
pub mod merge;

use std::io;
use std::path::PathBuf;

pub use batch::{build_batch_graph, BatchCounters, BatchGraph};
pub use dictionary::NodeDictionary;
pub use edges::{read_edges, write_edges, EdgeReader, EdgeRecord, EdgeWriter};
pub use merge::{merge_batches, MergedGraph};

/// Dense node id within one snapshot.
pub type NodeId = u64;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Parameter(String),
}
