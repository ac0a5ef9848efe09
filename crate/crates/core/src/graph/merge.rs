use std::path::{Path, PathBuf};

use crate::extsort::KMerge;
use crate::host::NodeKey;

use super::batch::{BatchDomains, BatchEdges};
use super::dictionary::NodeDictionary;
use super::edges::EdgeWriter;
use super::GraphError;

/// Result of merging batch files into one snapshot graph.
#[derive(Debug)]
pub struct MergedGraph {
    pub dictionary: NodeDictionary,
    pub dictionary_path: PathBuf,
    pub edges_path: PathBuf,
    pub n_edges: u64,
}

/// K-way merges sorted batch files into a global dictionary and a
/// `CGEDGE1` edge list sorted by `(src, dst)`.
///
/// Both passes stream: one open reader per batch plus the output buffers.
/// Because ids follow key order, merging edges in key order already yields
/// them in id order. The dictionary itself is kept in memory to translate
/// destination keys.
pub fn merge_batches(
    batches: &[impl AsRef<Path>],
    dictionary_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
) -> Result<MergedGraph, GraphError> {
    if batches.is_empty() {
        return Err(GraphError::Parameter("merge needs at least one batch file".into()));
    }
    let domain_sources = batches
        .iter()
        .map(BatchDomains::open)
        .collect::<Result<Vec<_>, _>>()?;
    let keys = KMerge::new(domain_sources, true).collect::<Result<Vec<NodeKey>, _>>()?;
    let dictionary = NodeDictionary::from_sorted(keys).map_err(GraphError::Parameter)?;
    dictionary.write(dictionary_path.as_ref())?;

    let edge_sources = batches
        .iter()
        .map(BatchEdges::open)
        .collect::<Result<Vec<_>, _>>()?;
    let mut writer = EdgeWriter::create(edges_path.as_ref())?;
    for edge in KMerge::new(edge_sources, true) {
        let (s, d) = edge?;
        let lookup = |k: &NodeKey| {
            dictionary.id(k).ok_or_else(|| {
                GraphError::Parameter(format!("edge endpoint `{k}` missing from every domain section"))
            })
        };
        let (src, dst) = (lookup(&s)?, lookup(&d)?);
        writer.push(src, dst)?;
    }
    let n_edges = writer.finish()?;

    Ok(MergedGraph {
        dictionary,
        dictionary_path: dictionary_path.as_ref().to_path_buf(),
        edges_path: edges_path.as_ref().to_path_buf(),
        n_edges,
    })
}
