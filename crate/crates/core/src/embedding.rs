//! Per-domain embedding vectors: provider ingestion, prefix truncation and
//! the `CGEMB1` file format.
//!
//! File layout: `CGEMB1\0\0`, u32 dim, u64 row count, then per row a u16 key
//! length, the key bytes and `dim` little-endian f32 values. Everything is
//! little-endian. The provider tag lives in a `<file>.json` sidecar.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{read_json, write_json};
use crate::host::NodeKey;
use crate::rng::SplitMix64;
use crate::text::DomainTextBundle;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"CGEMB1\0\0";
pub const DEFAULT_DIM: usize = 1024;
pub const DEFAULT_MRL_DIM: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Format(String),
    #[error("provider returned a {got}-dimensional vector, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Parameter(String),
    #[error("sidecar: {0}")]
    Json(#[from] serde_json::Error),
}

/// Error reported by a provider for a whole batch or a single text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{0}")]
pub struct ProviderError(pub String);

/// Source of text embeddings.
///
/// `embed` answers a batch with one slot per input text; a batch-level
/// `Err` fails every text of the batch.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn tag(&self) -> String;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Result<Vec<f32>, ProviderError>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    pub rows: BTreeMap<NodeKey, Vec<f32>>,
    pub provider_tag: String,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, provider_tag: impl Into<String>) -> Self {
        EmbeddingMatrix { dim, rows: BTreeMap::new(), provider_tag: provider_tag.into() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &NodeKey) -> Option<&[f32]> {
        self.rows.get(key).map(Vec::as_slice)
    }

    pub fn insert(&mut self, key: NodeKey, row: Vec<f32>) -> Result<(), EmbeddingError> {
        check_row(self.dim, &row)?;
        self.rows.insert(key, row);
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), EmbeddingError> {
        let mut w = EmbeddingWriter::create(path, self.dim, &self.provider_tag)?;
        for (k, row) in &self.rows {
            w.push(k, row)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref();
        let mut input = BufReader::new(File::open(path)?);
        let mut header = [0u8; 20];
        input
            .read_exact(&mut header)
            .map_err(|_| EmbeddingError::Format(format!("{}: shorter than CGEMB1 header", path.display())))?;
        if &header[..8] != EMBEDDING_MAGIC {
            return Err(EmbeddingError::Format(format!("{}: expected CGEMB1 header", path.display())));
        }
        let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(header[12..20].try_into().unwrap());
        let tag = read_sidecar(path).unwrap_or_else(|| "unknown".into());
        let mut m = EmbeddingMatrix::new(dim, tag);
        let mut values = vec![0u8; 4 * dim];
        for i in 0..count {
            let truncated = || EmbeddingError::Format(format!("{}: truncated at row {i}", path.display()));
            let mut len = [0u8; 2];
            input.read_exact(&mut len).map_err(|_| truncated())?;
            let mut key = vec![0u8; u16::from_le_bytes(len) as usize];
            input.read_exact(&mut key).map_err(|_| truncated())?;
            input.read_exact(&mut values).map_err(|_| truncated())?;
            let key: NodeKey = String::from_utf8(key)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| EmbeddingError::Format(format!("{}: bad key at row {i}", path.display())))?;
            let row = values.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            m.insert(key, row)?;
        }
        Ok(m)
    }
}

fn check_row(dim: usize, row: &[f32]) -> Result<(), EmbeddingError> {
    if row.len() != dim {
        return Err(EmbeddingError::DimMismatch { expected: dim, got: row.len() });
    }
    if row.iter().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::Format("non-finite embedding value".into()));
    }
    Ok(())
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    provider_tag: String,
    dim: usize,
    rows: u64,
}

fn read_sidecar(path: &Path) -> Option<String> {
    read_json::<Sidecar>(sidecar_path(path), "CGEMB1").ok().map(|s| s.provider_tag)
}

/// Appends rows to a `CGEMB1` file; the row count is patched on `finish`.
pub struct EmbeddingWriter {
    path: PathBuf,
    out: BufWriter<File>,
    dim: usize,
    tag: String,
    count: u64,
}

impl EmbeddingWriter {
    pub fn create(path: impl AsRef<Path>, dim: usize, tag: &str) -> Result<Self, EmbeddingError> {
        let path = path.as_ref().to_path_buf();
        let mut out = BufWriter::new(File::create(&path)?);
        out.write_all(EMBEDDING_MAGIC)?;
        out.write_all(&(dim as u32).to_le_bytes())?;
        out.write_all(&0u64.to_le_bytes())?;
        Ok(EmbeddingWriter { path, out, dim, tag: tag.to_string(), count: 0 })
    }

    pub fn push(&mut self, key: &NodeKey, row: &[f32]) -> Result<(), EmbeddingError> {
        check_row(self.dim, row)?;
        let k = key.as_str().as_bytes();
        let len = u16::try_from(k.len()).map_err(|_| EmbeddingError::Parameter(format!("key `{key}` too long")))?;
        self.out.write_all(&len.to_le_bytes())?;
        self.out.write_all(k)?;
        for x in row {
            self.out.write_all(&x.to_le_bytes())?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64, EmbeddingError> {
        self.out.flush()?;
        let mut file = self.out.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(12))?;
        file.write_all(&self.count.to_le_bytes())?;
        file.sync_all()?;
        let sidecar = Sidecar { provider_tag: self.tag, dim: self.dim, rows: self.count };
        write_json(sidecar_path(&self.path), "CGEMB1", &sidecar).map_err(|e| EmbeddingError::Format(e.to_string()))?;
        Ok(self.count)
    }
}

/// Destination for ingested rows.
pub trait RowSink {
    fn accept(&mut self, key: &NodeKey, row: Vec<f32>) -> Result<(), EmbeddingError>;
}

impl RowSink for EmbeddingMatrix {
    fn accept(&mut self, key: &NodeKey, row: Vec<f32>) -> Result<(), EmbeddingError> {
        self.insert(key.clone(), row)
    }
}

impl RowSink for EmbeddingWriter {
    fn accept(&mut self, key: &NodeKey, row: Vec<f32>) -> Result<(), EmbeddingError> {
        self.push(key, &row)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestConfig {
    pub batch_size: usize,
    /// Extra attempts after the first failure.
    pub retries: usize,
    /// Advisory per-request timeout handed to network-backed providers.
    pub timeout: Duration,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { batch_size: 32, retries: 2, timeout: Duration::from_secs(60) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingMiss {
    pub node: NodeKey,
    pub error: String,
}

/// Embeds the merged text of each bundle and hands rows to `sink` in bundle
/// order. Items that still fail after `retries` extra attempts are returned
/// as misses; a vector of the wrong dimension aborts the run.
pub fn ingest_embeddings(
    bundles: impl IntoIterator<Item = DomainTextBundle>,
    provider: &dyn EmbeddingProvider,
    config: IngestConfig,
    sink: &mut dyn RowSink,
) -> Result<Vec<EmbeddingMiss>, EmbeddingError> {
    let batch_size = config.batch_size.max(1);
    let mut misses = Vec::new();
    let mut batch: Vec<DomainTextBundle> = Vec::with_capacity(batch_size);
    let mut flush = |batch: &mut Vec<DomainTextBundle>, misses: &mut Vec<EmbeddingMiss>| -> Result<(), EmbeddingError> {
        let mut results: Vec<Option<Result<Vec<f32>, ProviderError>>> = vec![None; batch.len()];
        for _attempt in 0..=config.retries {
            let pending: Vec<usize> = (0..batch.len())
                .filter(|&i| !matches!(results[i], Some(Ok(_))))
                .collect();
            if pending.is_empty() {
                break;
            }
            let texts: Vec<&str> = pending.iter().map(|&i| batch[i].merged_text.as_str()).collect();
            match provider.embed(&texts) {
                Ok(out) if out.len() == pending.len() => {
                    for (&i, r) in pending.iter().zip(out) {
                        let r = r.and_then(|v| {
                            if v.len() != provider.dim() {
                                Ok(v) // dimension is checked below as a hard error
                            } else if v.iter().any(|x| !x.is_finite()) {
                                Err(ProviderError("non-finite value in embedding".into()))
                            } else {
                                Ok(v)
                            }
                        });
                        if let Ok(v) = &r {
                            if v.len() != provider.dim() {
                                return Err(EmbeddingError::DimMismatch { expected: provider.dim(), got: v.len() });
                            }
                        }
                        results[i] = Some(r);
                    }
                }
                Ok(out) => {
                    let e = ProviderError(format!("provider answered {} of {} texts", out.len(), pending.len()));
                    pending.iter().for_each(|&i| results[i] = Some(Err(e.clone())));
                }
                Err(e) => pending.iter().for_each(|&i| results[i] = Some(Err(e.clone()))),
            }
        }
        for (bundle, r) in batch.drain(..).zip(results) {
            match r {
                Some(Ok(v)) => sink.accept(&bundle.node, v)?,
                Some(Err(e)) => misses.push(EmbeddingMiss { node: bundle.node, error: e.0 }),
                None => misses.push(EmbeddingMiss { node: bundle.node, error: "not attempted".into() }),
            }
        }
        Ok(())
    };
    for b in bundles {
        batch.push(b);
        if batch.len() == batch_size {
            flush(&mut batch, &mut misses)?;
        }
    }
    if !batch.is_empty() {
        flush(&mut batch, &mut misses)?;
    }
    Ok(misses)
}

/// Keeps the first `k` coordinates of every row and rescales each row to
/// unit L2 norm. All-zero prefixes stay zero.
pub fn mrl_truncate(matrix: &EmbeddingMatrix, k: usize) -> Result<EmbeddingMatrix, EmbeddingError> {
    if k == 0 || k > matrix.dim {
        return Err(EmbeddingError::Parameter(format!("truncation dim {k} outside 1..={}", matrix.dim)));
    }
    let rows = matrix
        .rows
        .iter()
        .map(|(key, row)| (key.clone(), mrl_row(row, k)))
        .collect();
    Ok(EmbeddingMatrix { dim: k, rows, provider_tag: format!("{}/mrl{k}", matrix.provider_tag) })
}

/// One row of [`mrl_truncate`]: the first `k` values at unit norm.
pub fn mrl_row(row: &[f32], k: usize) -> Vec<f32> {
    let v = &row[..k.min(row.len())];
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|&x| (x as f64 / norm) as f32).collect()
}

/// Deterministic stand-in for a text-embedding model.
///
/// The first eight bytes of `SHA-256(seed as u64 LE || text)`, read as a
/// little-endian u64, seed a [`SplitMix64`]; `dim` Box-Muller standard
/// normals are drawn and the vector is scaled to unit length.
pub fn pseudo_embed(text: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(text.as_bytes());
    let digest = h.finalize();
    let mut rng = SplitMix64::new(u64::from_le_bytes(digest[..8].try_into().unwrap()));
    let raw: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    raw.iter().map(|x| (x / norm) as f32).collect()
}

/// Provider backed by [`pseudo_embed`].
#[derive(Debug, Clone)]
pub struct PseudoProvider {
    pub dim: usize,
    pub seed: u64,
}

impl EmbeddingProvider for PseudoProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn tag(&self) -> String {
        format!("pseudo-sha256-splitmix64/seed{}", self.seed)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Result<Vec<f32>, ProviderError>>, ProviderError> {
        Ok(texts.iter().map(|t| Ok(pseudo_embed(t, self.dim, self.seed))).collect())
    }
}

/// Provider returning the same vector for every text.
#[derive(Debug, Clone)]
pub struct ConstantProvider {
    pub vector: Vec<f32>,
}

impl EmbeddingProvider for ConstantProvider {
    fn dim(&self) -> usize {
        self.vector.len()
    }

    fn tag(&self) -> String {
        "constant".into()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Result<Vec<f32>, ProviderError>>, ProviderError> {
        Ok(texts.iter().map(|_| Ok(self.vector.clone())).collect())
    }
}
