//! Per-run job manifests and rerun detection.
//!
//! Every invocation writes one manifest next to its output. The manifest's
//! `hash` covers the command, the content of every input and the resolved
//! settings; a later run with the same hash whose recorded outputs are still
//! intact is skipped unless forced.

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use credigraph_core::artifact::{read_json, write_json};

use crate::error::InputContext;

pub const JOB_FORMAT: &str = "CGJOB1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub records: u64,
    pub errors: u64,
    pub skips: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Completed,
    /// Up to date with an earlier completed run; nothing was recomputed.
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobManifest {
    pub command: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: serde_json::Value,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub counters: Counters,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub hash: String,
}

impl JobManifest {
    pub fn read(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        Ok(read_json(path, JOB_FORMAT)?)
    }
}

/// What a successful job body reports back.
#[derive(Debug, Default)]
pub struct JobOutput {
    pub outputs: Vec<PathBuf>,
    pub counters: Counters,
}

#[derive(Debug)]
pub struct JobSpec {
    pub command: &'static str,
    /// Files or directories; directories contribute every file below them.
    pub inputs: Vec<PathBuf>,
    pub config: serde_json::Value,
    pub manifest_path: PathBuf,
    pub force: bool,
}

/// Manifest location for a job whose output is a directory.
pub fn dir_manifest(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("{command}.job.json"))
}

/// Manifest location for a job whose output is a single file.
pub fn file_manifest(file: &Path) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(".job.json");
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> io::Result<(u64, String)> {
    let mut input = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut bytes = 0u64;
    loop {
        let n = input.read(&mut buf)?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        h.update(&buf[..n]);
    }
    Ok((bytes, hex(&h.finalize())))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Every regular file under `path` (or `path` itself), sorted.
pub fn expand_files(path: &Path) -> io::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn digest_all(paths: &[PathBuf]) -> io::Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    for p in paths {
        for f in expand_files(p)? {
            let (bytes, sha256) = sha256_file(&f)?;
            out.push(FileDigest { path: f, bytes, sha256 });
        }
    }
    Ok(out)
}

fn job_hash(command: &str, inputs: &[FileDigest], config: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(JOB_FORMAT.as_bytes());
    h.update([0]);
    h.update(command.as_bytes());
    h.update([0]);
    // Contents, not locations: a moved but identical input is the same input.
    for d in inputs {
        h.update(d.sha256.as_bytes());
        h.update(d.bytes.to_le_bytes());
    }
    h.update([0]);
    h.update(config.to_string().as_bytes());
    hex(&h.finalize())
}

fn outputs_intact(outputs: &[FileDigest]) -> bool {
    !outputs.is_empty()
        && outputs
            .iter()
            .all(|d| sha256_file(&d.path).is_ok_and(|(bytes, sha)| bytes == d.bytes && sha == d.sha256))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    Skipped,
}

/// Runs `body` unless an identical earlier run is recorded at
/// `spec.manifest_path`, and writes the manifest either way. A failing body
/// still leaves a manifest with status `failed`.
pub fn run_job(spec: JobSpec, body: impl FnOnce() -> anyhow::Result<JobOutput>) -> anyhow::Result<(Outcome, JobManifest)> {
    let started = Utc::now();
    let inputs = digest_all(&spec.inputs).input(|| "reading job inputs".to_string())?;
    let hash = job_hash(spec.command, &inputs, &spec.config);
    if let Some(parent) = spec.manifest_path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }

    if !spec.force {
        if let Ok(previous) = JobManifest::read(&spec.manifest_path) {
            if previous.hash == hash && previous.status != JobStatus::Failed && outputs_intact(&previous.outputs) {
                tracing::info!(command = spec.command, manifest = %spec.manifest_path.display(), "inputs and settings unchanged; skipping");
                let manifest = JobManifest {
                    started,
                    finished: Utc::now(),
                    status: JobStatus::Skipped,
                    error: None,
                    ..previous
                };
                write_json(&spec.manifest_path, JOB_FORMAT, &manifest)?;
                println!("{}: up to date ({})", spec.command, spec.manifest_path.display());
                return Ok((Outcome::Skipped, manifest));
            }
        }
    }

    tracing::info!(command = spec.command, inputs = inputs.len(), "starting");
    let result = body();
    let mut manifest = JobManifest {
        command: spec.command.to_string(),
        inputs,
        outputs: Vec::new(),
        config: spec.config,
        started,
        finished: Utc::now(),
        counters: Counters::default(),
        status: JobStatus::Completed,
        error: None,
        hash,
    };
    match result {
        Ok(out) => {
            manifest.outputs = digest_all(&out.outputs).context("hashing job outputs")?;
            manifest.counters = out.counters;
            manifest.finished = Utc::now();
            write_json(&spec.manifest_path, JOB_FORMAT, &manifest)?;
            tracing::info!(
                command = spec.command,
                records = out.counters.records,
                errors = out.counters.errors,
                skips = out.counters.skips,
                "finished"
            );
            Ok((Outcome::Ran, manifest))
        }
        Err(e) => {
            manifest.status = JobStatus::Failed;
            manifest.error = Some(format!("{e:#}"));
            // The original error matters more than a failure to record it.
            let _ = write_json(&spec.manifest_path, JOB_FORMAT, &manifest);
            Err(e)
        }
    }
}
