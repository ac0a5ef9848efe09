//! `CGEDGE1` edge-list files: the 8-byte tag `CGEDGE1\0`, a little-endian u64
//! edge count, then `count` pairs of little-endian u64 `(src, dst)` ids.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{GraphError, NodeId};

pub const EDGE_MAGIC: &[u8; 8] = b"CGEDGE1\0";
const HEADER_LEN: u64 = 16;

/// A directed domain-level hyperlink within one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub timestamp: NaiveDate,
}

/// Streams edges to disk; the count in the header is patched on `finish`.
pub struct EdgeWriter {
    out: BufWriter<File>,
    count: u64,
}

impl EdgeWriter {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);
        out.write_all(EDGE_MAGIC)?;
        out.write_all(&0u64.to_le_bytes())?;
        Ok(EdgeWriter { out, count: 0 })
    }

    pub fn push(&mut self, src: NodeId, dst: NodeId) -> io::Result<()> {
        self.out.write_all(&src.to_le_bytes())?;
        self.out.write_all(&dst.to_le_bytes())?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<u64> {
        self.out.flush()?;
        let mut file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(8))?;
        file.write_all(&self.count.to_le_bytes())?;
        file.sync_all()?;
        Ok(self.count)
    }
}

/// Sequential reader over a `CGEDGE1` file.
pub struct EdgeReader {
    input: BufReader<File>,
    count: u64,
    read: u64,
}

impl EdgeReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        let mut input = BufReader::with_capacity(1 << 20, file);
        let mut header = [0u8; HEADER_LEN as usize];
        input.read_exact(&mut header).map_err(|_| GraphError::Format {
            path: path.to_path_buf(),
            message: "file shorter than edge-list header".into(),
        })?;
        if &header[..8] != EDGE_MAGIC {
            return Err(GraphError::Format {
                path: path.to_path_buf(),
                message: format!("expected CGEDGE1 header, found {:?}", String::from_utf8_lossy(&header[..8])),
            });
        }
        let count = u64::from_le_bytes(header[8..].try_into().unwrap());
        if len != HEADER_LEN + count * 16 {
            return Err(GraphError::Format {
                path: path.to_path_buf(),
                message: format!("header declares {count} edges but file holds {} bytes", len),
            });
        }
        Ok(EdgeReader { input, count, read: 0 })
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

impl Iterator for EdgeReader {
    type Item = io::Result<(NodeId, NodeId)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read == self.count {
            return None;
        }
        let mut buf = [0u8; 16];
        if let Err(e) = self.input.read_exact(&mut buf) {
            self.read = self.count;
            return Some(Err(e));
        }
        self.read += 1;
        let src = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let dst = u64::from_le_bytes(buf[8..].try_into().unwrap());
        Some(Ok((src, dst)))
    }
}

/// Writes a whole edge list in one go.
pub fn write_edges(path: impl AsRef<Path>, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> io::Result<u64> {
    let mut w = EdgeWriter::create(path)?;
    for (s, d) in edges {
        w.push(s, d)?;
    }
    w.finish()
}

/// Reads a whole edge list into memory. Meant for tests and small graphs.
pub fn read_edges(path: impl AsRef<Path>) -> Result<Vec<(NodeId, NodeId)>, GraphError> {
    let reader = EdgeReader::open(path)?;
    Ok(reader.collect::<io::Result<Vec<_>>>()?)
}
