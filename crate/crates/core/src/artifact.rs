//! JSON artifacts tagged with a `format` field.
//!
//! Binary stores carry magic bytes; JSON files carry `"format": "<TAG>"` as
//! their first key so that a reader can refuse a file written for another
//! version before looking at anything else.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: expected format {expected}, found {found}")]
    Version { path: PathBuf, expected: String, found: String },
}

/// Serialises `value` (which must be a JSON object) with a leading
/// `format` field.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, format: &str, value: &T) -> Result<(), ArtifactError> {
    let path = path.as_ref();
    let json_err = |source| ArtifactError::Json { path: path.to_path_buf(), source };
    let io_err = |source| ArtifactError::Io { path: path.to_path_buf(), source };
    let body = match serde_json::to_value(value).map_err(json_err)? {
        Value::Object(m) => m,
        other => Map::from_iter([("data".to_string(), other)]),
    };
    let mut tagged = Map::new();
    tagged.insert("format".into(), Value::String(format.into()));
    tagged.extend(body.into_iter().filter(|(k, _)| k != "format"));
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut w, &Value::Object(tagged)).map_err(json_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// The `format` tag of a JSON artifact, if it has one.
pub fn peek_format(path: impl AsRef<Path>) -> Result<Option<String>, ArtifactError> {
    let path = path.as_ref();
    let value = read_value(path)?;
    Ok(value.get("format").and_then(Value::as_str).map(str::to_string))
}

/// Reads a file written by [`write_json`] with the same `format`.
pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>, format: &str) -> Result<T, ArtifactError> {
    let path = path.as_ref();
    let mut value = read_value(path)?;
    let found = match value.as_object_mut().and_then(|m| m.remove("format")) {
        Some(Value::String(s)) => s,
        Some(other) => other.to_string(),
        None => "none".to_string(),
    };
    if found != format {
        return Err(ArtifactError::Version { path: path.to_path_buf(), expected: format.into(), found });
    }
    // Non-object payloads were wrapped under `data`.
    if let Some(m) = value.as_object_mut() {
        if m.len() == 1 && m.contains_key("data") {
            if let Ok(v) = T::deserialize(&m["data"]) {
                return Ok(v);
            }
        }
    }
    serde_json::from_value(value).map_err(|source| ArtifactError::Json { path: path.to_path_buf(), source })
}

fn read_value(path: &Path) -> Result<Value, ArtifactError> {
    let file = File::open(path).map_err(|source| ArtifactError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| ArtifactError::Json { path: path.to_path_buf(), source })
}
