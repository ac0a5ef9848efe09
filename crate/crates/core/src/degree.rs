//! Disk-backed degree vectors and single-pass degree filtering.
//!
//! Degree files are `CGDEG1\0\0`, a little-endian u64 node count `n`, then
//! `n` little-endian u32 in-degrees followed by `n` u32 out-degrees. They are
//! memory-mapped, so a table over hundreds of millions of nodes is paged in
//! on demand instead of being loaded.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use memmap2::{Mmap, MmapMut};
use serde::{Deserialize, Serialize};

use crate::graph::{EdgeReader, EdgeWriter, GraphError, NodeDictionary, NodeId};

pub const COMPACT_MAP_HEADER: &str = "#CGMAP1";
pub const DEGREE_MAGIC: &[u8; 8] = b"CGDEG1\0\0";
const HEADER_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum DegreeError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edge {index} (byte offset {offset}) references node {id}, but the graph has {n} nodes")]
    CorruptInput { index: u64, offset: u64, id: NodeId, n: u64 },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Parameter(String),
}

/// In/out degree arrays for one graph, backed by a memory-mapped file.
#[derive(Debug)]
pub struct DegreeTable {
    path: PathBuf,
    n: u64,
    map: Mmap,
}

impl DegreeTable {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DegreeError> {
        let path = path.as_ref();
        let file = File::open(path)?;
        // SAFETY: degree files are written once and never modified while mapped.
        let map = unsafe { Mmap::map(&file)? };
        let format = |message: String| DegreeError::Format { path: path.to_path_buf(), message };
        if map.len() < HEADER_LEN || &map[..8] != DEGREE_MAGIC {
            return Err(format("missing CGDEG1 header".into()));
        }
        let n = u64::from_le_bytes(map[8..16].try_into().unwrap());
        if map.len() as u64 != HEADER_LEN as u64 + 8 * n {
            return Err(format(format!("header declares {n} nodes but file holds {} bytes", map.len())));
        }
        Ok(DegreeTable { path: path.to_path_buf(), n, map })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    fn read_u32(&self, idx: u64) -> u32 {
        let at = HEADER_LEN + 4 * idx as usize;
        u32::from_le_bytes(self.map[at..at + 4].try_into().unwrap())
    }

    pub fn in_degree(&self, v: NodeId) -> u32 {
        assert!(v < self.n, "node {v} out of range");
        self.read_u32(v)
    }

    pub fn out_degree(&self, v: NodeId) -> u32 {
        assert!(v < self.n, "node {v} out of range");
        self.read_u32(self.n + v)
    }

    /// Total degree, in + out.
    pub fn degree(&self, v: NodeId) -> u64 {
        self.in_degree(v) as u64 + self.out_degree(v) as u64
    }

    /// `(sum of in-degrees, sum of out-degrees)`; both equal |E| unless a
    /// counter saturated.
    pub fn sums(&self) -> (u64, u64) {
        (0..self.n).fold((0, 0), |(i, o), v| (i + self.in_degree(v) as u64, o + self.out_degree(v) as u64))
    }
}

/// Counts in/out degrees with one sequential pass over a `CGEDGE1` file,
/// accumulating directly into a memory-mapped degree file at `out_path`.
pub fn compute_degrees(
    edges_path: impl AsRef<Path>,
    n: u64,
    out_path: impl AsRef<Path>,
) -> Result<DegreeTable, DegreeError> {
    let out_path = out_path.as_ref();
    let edges = EdgeReader::open(edges_path)?;
    {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(out_path)?;
        file.set_len(HEADER_LEN as u64 + 8 * n)?;
        // SAFETY: the file was just created by us and nothing else maps it.
        let mut map = unsafe { MmapMut::map_mut(&file)? };
        map[..8].copy_from_slice(DEGREE_MAGIC);
        map[8..16].copy_from_slice(&n.to_le_bytes());
        let bump = |map: &mut MmapMut, idx: u64| {
            let at = HEADER_LEN + 4 * idx as usize;
            let cell: &mut [u8; 4] = (&mut map[at..at + 4]).try_into().unwrap();
            *cell = u32::from_le_bytes(*cell).saturating_add(1).to_le_bytes();
        };
        for (index, edge) in edges.enumerate() {
            let (src, dst) = edge?;
            for id in [src, dst] {
                if id >= n {
                    return Err(DegreeError::CorruptInput {
                        index: index as u64,
                        offset: 16 + 16 * index as u64,
                        id,
                        n,
                    });
                }
            }
            bump(&mut map, n + src);
            bump(&mut map, dst);
        }
        map.flush()?;
    }
    DegreeTable::open(out_path)
}

/// Comparison applied to the raw degree when deciding survival.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Survive iff `degree > threshold`.
    #[default]
    Greater,
    /// Survive iff `degree >= threshold`.
    GreaterOrEqual,
}

impl Comparison {
    fn keeps(self, degree: u64, threshold: u64) -> bool {
        match self {
            Comparison::Greater => degree > threshold,
            Comparison::GreaterOrEqual => degree >= threshold,
        }
    }
}

/// Survivor bitset with a per-word rank directory, so the compact id of a
/// raw node is a popcount away.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurvivorSet {
    n: u64,
    words: Vec<u64>,
    rank: Vec<u64>,
}

impl SurvivorSet {
    fn from_fn(n: u64, mut keep: impl FnMut(NodeId) -> bool) -> Self {
        let mut words = vec![0u64; n.div_ceil(64) as usize];
        for v in 0..n {
            if keep(v) {
                words[(v / 64) as usize] |= 1 << (v % 64);
            }
        }
        let mut rank = Vec::with_capacity(words.len());
        let mut acc = 0u64;
        for w in &words {
            rank.push(acc);
            acc += w.count_ones() as u64;
        }
        SurvivorSet { n, words, rank }
    }

    pub fn raw_len(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> u64 {
        self.rank.last().copied().unwrap_or(0) + self.words.last().map_or(0, |w| w.count_ones() as u64)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v < self.n && self.words[(v / 64) as usize] >> (v % 64) & 1 == 1
    }

    /// Compact id of a surviving raw node (ascending raw-id order).
    pub fn compact(&self, v: NodeId) -> Option<NodeId> {
        if !self.contains(v) {
            return None;
        }
        let word = (v / 64) as usize;
        let below = self.words[word] & ((1u64 << (v % 64)) - 1);
        Some(self.rank[word] + below.count_ones() as u64)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).filter(|&v| self.contains(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterProvenance {
    pub snapshot_id: String,
    pub threshold: u64,
    pub comparison: Comparison,
}

/// Output of [`filter_by_degree`].
#[derive(Debug, Clone)]
pub struct FilteredGraph {
    pub survivors: SurvivorSet,
    pub edges_path: PathBuf,
    pub n_edges: u64,
    pub provenance: FilterProvenance,
}

impl FilteredGraph {
    pub fn n_nodes(&self) -> u64 {
        self.survivors.len()
    }

    /// Writes a `#CGMAP1` line, then `raw_id<TAB>compact_id` lines in
    /// ascending raw-id order.
    pub fn write_compact_map(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{COMPACT_MAP_HEADER}")?;
        for (compact, raw) in self.survivors.iter().enumerate() {
            writeln!(w, "{raw}\t{compact}")?;
        }
        w.flush()
    }

    /// Dictionary of the surviving keys; compact ids line up with it because
    /// both follow raw-id order.
    pub fn compact_dictionary(&self, raw: &NodeDictionary) -> NodeDictionary {
        let keys = self
            .survivors
            .iter()
            .filter_map(|v| raw.key(v).cloned())
            .collect();
        NodeDictionary::from_sorted(keys).expect("raw dictionary is sorted")
    }
}

/// Keeps every node whose raw total degree passes the threshold and every
/// edge whose endpoints both do, in one pass over the raw edges.
///
/// Survival is decided on the unfiltered degrees only, so a survivor can end
/// up isolated once its neighbours are gone. Running the filter again on its
/// own output may therefore remove more nodes.
pub fn filter_by_degree(
    edges_path: impl AsRef<Path>,
    degrees: &DegreeTable,
    threshold: i64,
    comparison: Comparison,
    out_edges: impl AsRef<Path>,
    snapshot_id: &str,
) -> Result<FilteredGraph, DegreeError> {
    if threshold < 0 {
        return Err(DegreeError::Parameter(format!("threshold must be non-negative, got {threshold}")));
    }
    let threshold = threshold as u64;
    let survivors = SurvivorSet::from_fn(degrees.n(), |v| comparison.keeps(degrees.degree(v), threshold));
    let mut writer = EdgeWriter::create(out_edges.as_ref())?;
    for (index, edge) in EdgeReader::open(edges_path)?.enumerate() {
        let (src, dst) = edge?;
        if src >= degrees.n() || dst >= degrees.n() {
            return Err(DegreeError::CorruptInput {
                index: index as u64,
                offset: 16 + 16 * index as u64,
                id: src.max(dst),
                n: degrees.n(),
            });
        }
        if let (Some(s), Some(d)) = (survivors.compact(src), survivors.compact(dst)) {
            writer.push(s, d)?;
        }
    }
    let n_edges = writer.finish()?;
    Ok(FilteredGraph {
        survivors,
        edges_path: out_edges.as_ref().to_path_buf(),
        n_edges,
        provenance: FilterProvenance {
            snapshot_id: snapshot_id.to_string(),
            threshold,
            comparison,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCounts {
    pub nodes: u64,
    pub edges: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    /// Percent of raw edges kept, rounded to two decimals.
    pub edge_retention_pct: f64,
    /// Percent of raw nodes kept, rounded to two decimals.
    pub node_retention_pct: f64,
}

/// `100 * filtered / raw` for nodes and edges, rounded to two decimals.
pub fn filter_report(raw: GraphCounts, filtered: GraphCounts) -> Result<RetentionReport, DegreeError> {
    if raw.nodes == 0 || raw.edges == 0 {
        return Err(DegreeError::Parameter("retention is undefined for an empty raw graph".into()));
    }
    let pct = |kept: u64, all: u64| (10_000.0 * kept as f64 / all as f64).round() / 100.0;
    Ok(RetentionReport {
        edge_retention_pct: pct(filtered.edges, raw.edges),
        node_retention_pct: pct(filtered.nodes, raw.nodes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{read_edges, write_edges};

    fn table(dir: &Path, n: u64, edges: &[(u64, u64)]) -> DegreeTable {
        write_edges(dir.join("e.bin"), edges.iter().copied()).unwrap();
        compute_degrees(dir.join("e.bin"), n, dir.join("d.bin")).unwrap()
    }

    #[test]
    fn directed_triangle() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(dir.path(), 3, &[(0, 1), (1, 2), (2, 0)]);
        for v in 0..3 {
            assert_eq!(t.degree(v), 2);
        }
        assert_eq!(t.sums(), (3, 3));
    }

    #[test]
    fn empty_edge_list() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(dir.path(), 4, &[]);
        assert!((0..4).all(|v| t.degree(v) == 0));
    }

    #[test]
    fn file_layout() {
        let dir = tempfile::tempdir().unwrap();
        table(dir.path(), 2, &[(0, 1)]);
        let bytes = std::fs::read(dir.path().join("d.bin")).unwrap();
        assert_eq!(&bytes[..8], b"CGDEG1\0\0");
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        // in: [0, 1], out: [1, 0]
        assert_eq!(&bytes[16..], &[0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn out_of_range_id() {
        let dir = tempfile::tempdir().unwrap();
        write_edges(dir.path().join("e.bin"), [(0, 1), (1, 7)]).unwrap();
        let err = compute_degrees(dir.path().join("e.bin"), 3, dir.path().join("d.bin")).unwrap_err();
        match err {
            DegreeError::CorruptInput { index, offset, id, .. } => {
                assert_eq!((index, offset, id), (1, 32, 7));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn star_leaves_isolated_center() {
        let dir = tempfile::tempdir().unwrap();
        let edges: Vec<_> = (1..=5).map(|l| (0, l)).collect();
        let t = table(dir.path(), 6, &edges);
        let f = filter_by_degree(dir.path().join("e.bin"), &t, 3, Comparison::Greater, dir.path().join("f.bin"), "s").unwrap();
        assert_eq!(f.survivors.iter().collect::<Vec<_>>(), [0]);
        assert_eq!(f.n_edges, 0);
    }

    #[test]
    fn threshold_zero_drops_isolated_only() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(dir.path(), 4, &[(0, 1), (1, 2)]);
        let f = filter_by_degree(dir.path().join("e.bin"), &t, 0, Comparison::Greater, dir.path().join("f.bin"), "s").unwrap();
        assert_eq!(f.survivors.iter().collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(read_edges(dir.path().join("f.bin")).unwrap(), [(0, 1), (1, 2)]);
    }

    #[test]
    fn negative_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(dir.path(), 2, &[(0, 1)]);
        let r = filter_by_degree(dir.path().join("e.bin"), &t, -1, Comparison::Greater, dir.path().join("f.bin"), "s");
        assert!(matches!(r, Err(DegreeError::Parameter(_))));
    }

    #[test]
    fn compact_ids_and_map() {
        let dir = tempfile::tempdir().unwrap();
        // Nodes 1 and 3 have degree 2, the rest lower.
        let t = table(dir.path(), 5, &[(1, 3), (3, 1), (0, 4)]);
        let f = filter_by_degree(dir.path().join("e.bin"), &t, 1, Comparison::Greater, dir.path().join("f.bin"), "s").unwrap();
        assert_eq!(f.survivors.compact(1), Some(0));
        assert_eq!(f.survivors.compact(3), Some(1));
        assert_eq!(f.survivors.compact(0), None);
        assert_eq!(read_edges(dir.path().join("f.bin")).unwrap(), [(0, 1), (1, 0)]);
        f.write_compact_map(dir.path().join("m.tsv")).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("m.tsv")).unwrap(), "#CGMAP1\n1\t0\n3\t1\n");
    }

    #[test]
    fn rank_directory_crosses_words() {
        let s = SurvivorSet::from_fn(200, |v| v % 3 == 0);
        for v in 0..200 {
            assert_eq!(s.compact(v), (v % 3 == 0).then_some(v / 3));
        }
        assert_eq!(s.len(), 67);
    }

    #[test]
    fn retention() {
        let raw = GraphCounts { nodes: 132_547_562, edges: 1_124_576_420 };
        let processed = GraphCounts { nodes: 45_041_648, edges: 1_014_523_552 };
        let r = filter_report(raw, processed).unwrap();
        assert_eq!(r.edge_retention_pct, 90.21);
        assert_eq!(r.node_retention_pct, 33.98);
        let same = filter_report(raw, raw).unwrap();
        assert_eq!((same.edge_retention_pct, same.node_retention_pct), (100.0, 100.0));
        assert!(filter_report(GraphCounts { nodes: 0, edges: 0 }, raw).is_err());
    }
}
