use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::host::NodeKey;

use super::{GraphError, NodeId};

/// First line of every dictionary file.
pub const DICTIONARY_HEADER: &str = "#CGDICT1";

/// Bijection between [`NodeKey`]s and dense ids `0..len`.
///
/// Ids follow lexicographic key order, so a dictionary rebuilt from the same
/// key set is always identical. On disk it is a [`DICTIONARY_HEADER`] line
/// followed by one key per line in id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeDictionary {
    keys: Vec<NodeKey>,
}

impl NodeDictionary {
    /// Builds a dictionary from any collection of keys; duplicates collapse.
    pub fn from_keys(keys: impl IntoIterator<Item = NodeKey>) -> Self {
        let mut keys: Vec<NodeKey> = keys.into_iter().collect();
        keys.sort_unstable();
        keys.dedup();
        NodeDictionary { keys }
    }

    /// Accepts keys that are already strictly ascending.
    pub fn from_sorted(keys: Vec<NodeKey>) -> Result<Self, String> {
        if let Some(w) = keys.windows(2).find(|w| w[0] >= w[1]) {
            return Err(format!("keys not strictly ascending at `{}`, `{}`", w[0], w[1]));
        }
        Ok(NodeDictionary { keys })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn id(&self, key: &NodeKey) -> Option<NodeId> {
        self.keys.binary_search(key).ok().map(|i| i as NodeId)
    }

    pub fn key(&self, id: NodeId) -> Option<&NodeKey> {
        self.keys.get(id as usize)
    }

    pub fn keys(&self) -> &[NodeKey] {
        &self.keys
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeKey)> {
        self.keys.iter().enumerate().map(|(i, k)| (i as NodeId, k))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{DICTIONARY_HEADER}")?;
        for k in &self.keys {
            writeln!(w, "{k}")?;
        }
        w.flush()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let mut keys = Vec::new();
        let lines = stream_lines(path).map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData => GraphError::Format { path: path.to_path_buf(), message: e.to_string() },
            _ => GraphError::Io(e),
        })?;
        for line in lines {
            let line = line?;
            let key: NodeKey = line.parse().map_err(|e| GraphError::Format {
                path: path.to_path_buf(),
                message: format!("bad node key `{line}`: {e}"),
            })?;
            keys.push(key);
        }
        NodeDictionary::from_sorted(keys).map_err(|message| GraphError::Format {
            path: path.to_path_buf(),
            message,
        })
    }
}

/// Streams the keys of a dictionary file in id order without loading it.
pub fn stream_dictionary(path: impl AsRef<Path>) -> io::Result<impl Iterator<Item = io::Result<NodeKey>>> {
    Ok(stream_lines(path.as_ref())?.map(|l| {
        l.and_then(|s| {
            s.parse::<NodeKey>()
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
    }))
}

/// Lines after a validated header.
fn stream_lines(path: &Path) -> io::Result<io::Lines<BufReader<File>>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    match lines.next().transpose()? {
        Some(h) if h == DICTIONARY_HEADER => Ok(lines),
        other => Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!(
                "{}: expected dictionary header {DICTIONARY_HEADER}, found {:?}",
                path.display(),
                other.unwrap_or_default()
            ),
        )),
    }
}
