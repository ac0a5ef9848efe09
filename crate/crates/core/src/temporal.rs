//! Snapshot manifests, temporal sequences of snapshots, and month-to-month
//! structural diffs.

use std::collections::{BTreeMap, HashSet};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::artifact::{read_json, write_json, ArtifactError};
use crate::degree::{compute_degrees, DegreeError, DegreeTable, FilterProvenance};
use crate::graph::dictionary::stream_dictionary;
use crate::graph::EdgeReader;
use crate::host::NodeKey;

#[derive(Debug, thiserror::Error)]
pub enum TemporalError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Degree(#[from] DegreeError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("unparseable crawl date `{0}`")]
    Date(String),
    #[error("{0}")]
    Assembly(String),
    #[error("{0}")]
    Input(String),
}

/// Monday of the ISO week containing `date`.
pub fn week_start(date: NaiveDate) -> NaiveDate {
    date - Days::new(date.weekday().num_days_from_monday() as u64)
}

/// Snapshot timestamp for a crawl that began on `crawl_start`, given as
/// `YYYY-MM-DD` or an RFC 3339 timestamp.
pub fn assign_timestamp(crawl_start: &str) -> Result<NaiveDate, TemporalError> {
    let s = crawl_start.trim();
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.date_naive()))
        .ok_or_else(|| TemporalError::Date(s.to_string()))?;
    Ok(week_start(date))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotFiles {
    pub dictionary: PathBuf,
    pub edges: PathBuf,
    pub degrees: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compact_map: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundles: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotCounts {
    pub nodes: u64,
    pub edges: u64,
}

/// On-disk description of one crawl-month graph. Relative file paths are
/// relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub snapshot_id: String,
    pub timestamp: NaiveDate,
    pub files: SnapshotFiles,
    pub counts: SnapshotCounts,
    pub format_versions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterProvenance>,
}

impl SnapshotManifest {
    pub fn default_format_versions() -> BTreeMap<String, String> {
        BTreeMap::from([
            ("dictionary".to_string(), "CGDICT1".to_string()),
            ("edges".to_string(), "CGEDGE1".to_string()),
            ("degrees".to_string(), "CGDEG1".to_string()),
        ])
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TemporalError> {
        Ok(write_json(path, SNAPSHOT_FORMAT, self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TemporalError> {
        Ok(read_json(path, SNAPSHOT_FORMAT)?)
    }
}

/// A manifest plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct SnapshotGraph {
    pub manifest: SnapshotManifest,
    pub base: PathBuf,
}

impl SnapshotGraph {
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self, TemporalError> {
        let manifest_path = manifest_path.as_ref();
        let manifest = SnapshotManifest::read(manifest_path)?;
        let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(SnapshotGraph { manifest, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn dictionary_path(&self) -> PathBuf {
        self.resolve(&self.manifest.files.dictionary)
    }

    pub fn edges_path(&self) -> PathBuf {
        self.resolve(&self.manifest.files.edges)
    }

    pub fn degrees(&self) -> Result<DegreeTable, TemporalError> {
        Ok(DegreeTable::open(self.resolve(&self.manifest.files.degrees))?)
    }

    /// `(key, out-degree)` in key order, streamed from disk.
    pub fn out_degrees(&self) -> Result<Vec<(NodeKey, u32)>, TemporalError> {
        let degrees = self.degrees()?;
        let mut out = Vec::with_capacity(degrees.n() as usize);
        for (id, key) in stream_dictionary(self.dictionary_path())?.enumerate() {
            let id = id as u64;
            if id >= degrees.n() {
                return Err(TemporalError::Input("dictionary longer than degree table".into()));
            }
            out.push((key?, degrees.out_degree(id)));
        }
        if out.len() as u64 != degrees.n() {
            return Err(TemporalError::Input("dictionary shorter than degree table".into()));
        }
        Ok(out)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_FORMAT: &str = "CGSNAP1";
pub const TEMPORAL_FORMAT: &str = "CGTEMPORAL1";

/// Computes the degree table for a dictionary and edge list stored under
/// `dir` and writes `dir/manifest.json`. Paths in `files` are relative to
/// `dir`; `files.degrees` is created.
pub fn assemble_snapshot(
    dir: impl AsRef<Path>,
    snapshot_id: &str,
    timestamp: NaiveDate,
    files: SnapshotFiles,
    filter: Option<FilterProvenance>,
) -> Result<SnapshotGraph, TemporalError> {
    let dir = dir.as_ref();
    let mut n_nodes = 0u64;
    let mut last: Option<NodeKey> = None;
    for key in stream_dictionary(dir.join(&files.dictionary))? {
        let key = key?;
        if last.as_ref().is_some_and(|l| *l >= key) {
            return Err(TemporalError::Assembly(format!("dictionary is not strictly ascending at `{key}`")));
        }
        last = Some(key);
        n_nodes += 1;
    }
    let degrees = compute_degrees(dir.join(&files.edges), n_nodes, dir.join(&files.degrees))?;
    drop(degrees);
    let n_edges = EdgeReader::open(dir.join(&files.edges)).map_err(DegreeError::from)?.len();
    let mut format_versions = SnapshotManifest::default_format_versions();
    if files.bundles.is_some() {
        format_versions.insert("bundles".into(), "CGTXT1".into());
    }
    if files.compact_map.is_some() {
        format_versions.insert("compact_map".into(), "CGMAP1".into());
    }
    let manifest = SnapshotManifest {
        snapshot_id: snapshot_id.to_string(),
        timestamp,
        files,
        counts: SnapshotCounts { nodes: n_nodes, edges: n_edges },
        format_versions,
        filter,
    };
    manifest.write(dir.join(MANIFEST_FILE))?;
    Ok(SnapshotGraph { manifest, base: dir.to_path_buf() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDiff {
    pub overlap_nodes: u64,
    pub new_nodes: u64,
    pub vanished_nodes: u64,
    pub out_degree_increased: u64,
    pub out_degree_decreased: u64,
    /// `out_degree_increased / overlap_nodes`; `None` when nothing overlaps.
    pub out_degree_increased_fraction: Option<f64>,
}

/// Compares two snapshots joined by node key. Both inputs are
/// `(key, out-degree)` streams in strictly ascending key order, which is how
/// dictionaries are stored, so the join is a single merge pass.
pub fn snapshot_diff<P, N>(prev: P, next: N) -> Result<SnapshotDiff, TemporalError>
where
    P: IntoIterator<Item = (NodeKey, u32)>,
    N: IntoIterator<Item = (NodeKey, u32)>,
{
    let mut prev = ascending(prev.into_iter(), "previous");
    let mut next = ascending(next.into_iter(), "next");
    let mut d = SnapshotDiff {
        overlap_nodes: 0,
        new_nodes: 0,
        vanished_nodes: 0,
        out_degree_increased: 0,
        out_degree_decreased: 0,
        out_degree_increased_fraction: None,
    };
    let mut a = prev.next().transpose()?;
    let mut b = next.next().transpose()?;
    loop {
        match (&a, &b) {
            (None, None) => break,
            (Some(_), None) => {
                d.vanished_nodes += 1;
                a = prev.next().transpose()?;
            }
            (None, Some(_)) => {
                d.new_nodes += 1;
                b = next.next().transpose()?;
            }
            (Some((ka, da)), Some((kb, db))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    d.vanished_nodes += 1;
                    a = prev.next().transpose()?;
                }
                std::cmp::Ordering::Greater => {
                    d.new_nodes += 1;
                    b = next.next().transpose()?;
                }
                std::cmp::Ordering::Equal => {
                    d.overlap_nodes += 1;
                    d.out_degree_increased += (db > da) as u64;
                    d.out_degree_decreased += (db < da) as u64;
                    a = prev.next().transpose()?;
                    b = next.next().transpose()?;
                }
            },
        }
    }
    if d.overlap_nodes > 0 {
        d.out_degree_increased_fraction = Some(d.out_degree_increased as f64 / d.overlap_nodes as f64);
    }
    Ok(d)
}

fn ascending(
    it: impl Iterator<Item = (NodeKey, u32)>,
    side: &'static str,
) -> impl Iterator<Item = Result<(NodeKey, u32), TemporalError>> {
    let mut last: Option<NodeKey> = None;
    it.map(move |(k, deg)| {
        if last.as_ref().is_some_and(|l| *l >= k) {
            return Err(TemporalError::Input(format!("{side} snapshot keys are not strictly ascending at `{k}`")));
        }
        last = Some(k.clone());
        Ok((k, deg))
    })
}

/// Diff of two on-disk snapshots (typically degree-filtered ones).
pub fn diff_snapshots(prev: &SnapshotGraph, next: &SnapshotGraph) -> Result<SnapshotDiff, TemporalError> {
    snapshot_diff(prev.out_degrees()?, next.out_degrees()?)
}

/// Time-ordered sequence of snapshots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalGraph {
    pub snapshots: Vec<SnapshotManifest>,
}

/// Orders snapshots by timestamp and checks that ids are unique and
/// timestamps strictly increase.
pub fn build_temporal_graph(mut manifests: Vec<SnapshotManifest>) -> Result<TemporalGraph, TemporalError> {
    let mut ids = HashSet::new();
    for m in &manifests {
        if !ids.insert(m.snapshot_id.clone()) {
            return Err(TemporalError::Assembly(format!("duplicate snapshot id `{}`", m.snapshot_id)));
        }
    }
    manifests.sort_by_key(|m| m.timestamp);
    if let Some(w) = manifests.windows(2).find(|w| w[0].timestamp >= w[1].timestamp) {
        return Err(TemporalError::Assembly(format!(
            "snapshots `{}` and `{}` share timestamp {}",
            w[0].snapshot_id, w[1].snapshot_id, w[1].timestamp
        )));
    }
    Ok(TemporalGraph { snapshots: manifests })
}

impl TemporalGraph {
    /// Index of the last snapshot (`T` in `G_0 .. G_T`).
    pub fn horizon(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TemporalError> {
        Ok(write_json(path, TEMPORAL_FORMAT, self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TemporalError> {
        let g: TemporalGraph = read_json(path, TEMPORAL_FORMAT)?;
        build_temporal_graph(g.snapshots)
    }
}
