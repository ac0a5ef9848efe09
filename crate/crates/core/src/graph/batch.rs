//! Per-batch aggregation of page links into a sorted, deduplicated
//! domain graph, persisted as a `CGBATCH1` text file:
//!
//! ```text
//! CGBATCH1
//! D <domain count>
//! <node key>            (ascending)
//! E <edge count>
//! <src key>\t<dst key>  (ascending)
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use crate::archive::PageLink;
use crate::host::{normalize_host, NodeKey};

use super::GraphError;

pub const BATCH_MAGIC: &str = "CGBATCH1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BatchCounters {
    pub pages: u64,
    pub links: u64,
    pub rejected_urls: u64,
    pub self_loops: u64,
}

/// In-memory domain graph of a single batch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchGraph {
    pub domains: BTreeSet<NodeKey>,
    pub edges: BTreeSet<(NodeKey, NodeKey)>,
    pub counters: BatchCounters,
}

impl BatchGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a crawled page so its domain becomes a node even if the page
    /// has no usable out-links.
    pub fn add_page(&mut self, url: &str) {
        self.counters.pages += 1;
        match normalize_host(url) {
            Ok(k) => {
                self.domains.insert(k);
            }
            Err(_) => self.counters.rejected_urls += 1,
        }
    }

    /// Adds one page link. Endpoints that normalise become nodes; an edge is
    /// kept only when both do and they differ.
    pub fn add_link(&mut self, link: &PageLink) {
        self.counters.links += 1;
        let src = normalize_host(&link.source_url).ok();
        let dst = normalize_host(&link.target_url).ok();
        if src.is_none() || dst.is_none() {
            self.counters.rejected_urls += 1;
        }
        match (src, dst) {
            (Some(s), Some(d)) => {
                self.domains.insert(s.clone());
                self.domains.insert(d.clone());
                if s == d {
                    self.counters.self_loops += 1;
                } else {
                    self.edges.insert((s, d));
                }
            }
            (Some(k), None) | (None, Some(k)) => {
                self.domains.insert(k);
            }
            (None, None) => {}
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{BATCH_MAGIC}")?;
        writeln!(w, "D {}", self.domains.len())?;
        for d in &self.domains {
            writeln!(w, "{d}")?;
        }
        writeln!(w, "E {}", self.edges.len())?;
        for (s, d) in &self.edges {
            writeln!(w, "{s}\t{d}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads a whole batch file. The merge never does this; it streams.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let domains = BatchDomains::open(path)?.collect::<Result<BTreeSet<_>, _>>()?;
        let edges = BatchEdges::open(path)?.collect::<Result<BTreeSet<_>, _>>()?;
        Ok(BatchGraph {
            domains,
            edges,
            counters: BatchCounters::default(),
        })
    }
}

/// Builds the graph of one batch of links.
pub fn build_batch_graph(links: impl IntoIterator<Item = PageLink>) -> BatchGraph {
    let mut g = BatchGraph::new();
    for l in links {
        g.add_link(&l);
    }
    g
}

struct SectionReader {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    remaining: u64,
    previous: Option<String>,
}

impl SectionReader {
    fn open(path: &Path, tag: &str) -> Result<Self, GraphError> {
        let format = |message: String| GraphError::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = BufReader::new(File::open(path)?).lines();
        let magic = lines.next().transpose()?.unwrap_or_default();
        if magic != BATCH_MAGIC {
            return Err(format(format!("expected version line {BATCH_MAGIC}, found {magic:?}")));
        }
        let section = |expect: &str, lines: &mut Lines<BufReader<File>>| -> Result<u64, GraphError> {
            let line = lines.next().transpose()?.unwrap_or_default();
            line.strip_prefix(expect)
                .and_then(|n| n.trim().parse().ok())
                .ok_or_else(|| format(format!("expected `{expect}<count>`, found {line:?}")))
        };
        let d = section("D ", &mut lines)?;
        if tag == "D" {
            return Ok(SectionReader { path: path.to_path_buf(), lines, remaining: d, previous: None });
        }
        for _ in 0..d {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| format("domain section shorter than declared".into()))?;
        }
        let e = section("E ", &mut lines)?;
        Ok(SectionReader { path: path.to_path_buf(), lines, remaining: e, previous: None })
    }

    fn next_line(&mut self) -> Option<Result<String, GraphError>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let line = match self.lines.next() {
            Some(Ok(l)) => l,
            Some(Err(e)) => return Some(Err(e.into())),
            None => return Some(Err(self.error("section shorter than declared".into()))),
        };
        if let Some(prev) = &self.previous {
            if *prev >= line {
                return Some(Err(self.error(format!("section not strictly sorted at {line:?}"))));
            }
        }
        self.previous = Some(line.clone());
        Some(Ok(line))
    }

    fn error(&mut self, message: String) -> GraphError {
        self.remaining = 0;
        GraphError::Format { path: self.path.clone(), message }
    }
}

/// Streams the domain section of a batch file.
pub struct BatchDomains(SectionReader);

impl BatchDomains {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        SectionReader::open(path.as_ref(), "D").map(BatchDomains)
    }
}

impl Iterator for BatchDomains {
    type Item = Result<NodeKey, GraphError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.0.next_line()? {
            Ok(l) => l,
            Err(e) => return Some(Err(e)),
        };
        Some(line.parse().map_err(|e| self.0.error(format!("bad node key {line:?}: {e}"))))
    }
}

/// Streams the edge section of a batch file.
pub struct BatchEdges(SectionReader);

impl BatchEdges {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        SectionReader::open(path.as_ref(), "E").map(BatchEdges)
    }
}

impl Iterator for BatchEdges {
    type Item = Result<(NodeKey, NodeKey), GraphError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.0.next_line()? {
            Ok(l) => l,
            Err(e) => return Some(Err(e)),
        };
        let parsed = line.split_once('\t').and_then(|(s, d)| {
            let s: NodeKey = s.parse().ok()?;
            let d: NodeKey = d.parse().ok()?;
            Some((s, d))
        });
        Some(parsed.ok_or_else(|| self.0.error(format!("bad edge line {line:?}"))))
    }
}
