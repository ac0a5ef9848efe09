use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use chrono::{TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use credigraph_core::archive::{extract_wet_document, open_archive, ArchiveError, ArchiveReader, RecordType, WetDocument};
use credigraph_core::artifact::write_json;
use credigraph_core::embedding::{
    ingest_embeddings, mrl_row, EmbeddingError, EmbeddingMiss, EmbeddingProvider, EmbeddingWriter, IngestConfig,
    PseudoProvider, RowSink,
};
use credigraph_core::graph::NodeDictionary;
use credigraph_core::host::NodeKey;
use credigraph_core::text::{
    fetch_missing, group_documents, BundleReader, BundleWriter, FetchConfig, FetchError, FetchMiss,
    FetchOutcome, StubFetcher,
};

use super::graph::{collect_inputs, open_snapshot};
use super::{settings, Context, EmbedArgs, ExtractTextArgs, ProviderArg, EMBED_REPORT_FORMAT, TEXT_REPORT_FORMAT};
use crate::config::scratch_dir;
use crate::error::{input_error, InputContext};
use crate::job::{file_manifest, run_job, Counters, JobOutput, JobSpec};

/// `<path>` with `suffix` appended to the file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Streams the conversion records of several WET files as documents,
/// counting what it has to drop. The first unreadable file stops the stream
/// and is kept in `fatal`.
struct WetDocuments<'a> {
    files: std::slice::Iter<'a, PathBuf>,
    current: Option<(PathBuf, ArchiveReader<BufReader<File>>)>,
    counters: Counters,
    fatal: Option<anyhow::Error>,
}

impl<'a> WetDocuments<'a> {
    fn new(files: &'a [PathBuf]) -> Self {
        WetDocuments { files: files.iter(), current: None, counters: Counters::default(), fatal: None }
    }
}

impl Iterator for WetDocuments<'_> {
    type Item = WetDocument;

    fn next(&mut self) -> Option<WetDocument> {
        loop {
            if self.fatal.is_some() {
                return None;
            }
            let Some((path, reader)) = self.current.as_mut() else {
                let path = self.files.next()?.clone();
                match open_archive(&path) {
                    Ok(r) => self.current = Some((path, r)),
                    Err(e) => self.fatal = Some(anyhow::Error::from(e).context(crate::error::InputError(format!("opening {}", path.display())))),
                }
                continue;
            };
            match reader.next() {
                None => self.current = None,
                Some(Ok(rec)) if rec.record_type == RecordType::Conversion => {
                    self.counters.records += 1;
                    match extract_wet_document(&rec) {
                        Ok(doc) => return Some(doc),
                        Err(e) => {
                            self.counters.errors += 1;
                            tracing::warn!(file = %path.display(), error = %e, "unusable conversion record");
                        }
                    }
                }
                Some(Ok(_)) => self.counters.skips += 1,
                Some(Err(ArchiveError::Record { offset, message })) => {
                    self.counters.errors += 1;
                    tracing::warn!(file = %path.display(), offset, error = %message, "damaged record skipped");
                }
                Some(Err(e)) => {
                    self.fatal = Some(anyhow::Error::from(e).context(crate::error::InputError(format!("reading {}", path.display()))));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextReport {
    pub snapshot_id: String,
    pub documents: u64,
    /// Documents whose URL has no usable host.
    pub unattributed_documents: u64,
    pub domains_in_snapshot: u64,
    pub domains_with_crawled_text: u64,
    /// Domains with crawled text that are not in the snapshot.
    pub domains_outside_snapshot: u64,
    pub domains_fetched: u64,
    pub misses: Vec<FetchMiss>,
    pub bundles: u64,
}

pub fn extract_text(args: ExtractTextArgs, ctx: &Context) -> anyhow::Result<()> {
    let files = collect_inputs(&args.wet)?;
    let snapshot = open_snapshot(&args.snapshot)?;
    let max_chars = args.max_chars.unwrap_or(ctx.config.max_chars);
    if max_chars == 0 {
        return Err(input_error("--max-chars must be positive"));
    }
    let mut inputs = files.clone();
    inputs.push(snapshot.dictionary_path());
    inputs.extend(args.homepages.clone());
    let report_path = sibling(&args.out, ".report.json");
    let spec = JobSpec {
        command: "extract-text",
        inputs,
        config: settings(&args, json!({ "max_chars": max_chars, "run_capacity": ctx.config.run_capacity })),
        manifest_path: file_manifest(&args.out),
        force: ctx.force,
    };
    run_job(spec, || {
        let dictionary = NodeDictionary::read(snapshot.dictionary_path()).input(|| "reading snapshot dictionary".to_string())?;
        let scratch = scratch_dir();
        let mut docs = WetDocuments::new(&files);
        let groups = group_documents(&mut docs, scratch.as_deref(), ctx.config.run_capacity)?;
        if let Some(e) = docs.fatal.take() {
            return Err(e);
        }
        let grouping = groups.counters;

        // Crawled bundles arrive in key order; park them while the
        // text-less domains are worked out.
        let crawled_path = sibling(&args.out, ".crawled.tmp");
        let mut covered = vec![false; dictionary.len()];
        let mut crawled = BundleWriter::create(&crawled_path)?;
        let (mut with_text, mut outside) = (0u64, 0u64);
        for b in groups.into_bundles(max_chars) {
            let b = b?;
            match dictionary.id(&b.node) {
                Some(id) => {
                    covered[id as usize] = true;
                    crawled.push(&b)?;
                    with_text += 1;
                }
                None => outside += 1,
            }
        }
        crawled.finish()?;

        let missing: Vec<NodeKey> = dictionary
            .iter()
            .filter(|(id, _)| !covered[*id as usize])
            .map(|(_, k)| k.clone())
            .collect();
        let fetched = match &args.homepages {
            Some(path) => {
                let fetch_time = Utc.from_utc_datetime(&snapshot.manifest.timestamp.and_hms_opt(0, 0, 0).unwrap());
                let fetcher = StubFetcher::from_json_file(path, fetch_time).input(|| format!("reading {}", path.display()))?;
                let config = FetchConfig { max_in_flight: ctx.config.workers(), max_chars, ..FetchConfig::default() };
                fetch_missing(&missing, &fetcher, config)
            }
            None => FetchOutcome {
                bundles: Vec::new(),
                misses: missing.iter().map(|d| FetchMiss { domain: d.clone(), reason: FetchError::Absent }).collect(),
            },
        };

        let mut writer = BundleWriter::create(&args.out)?;
        let mut from_fetch = fetched.bundles.iter().peekable();
        for b in BundleReader::open(&crawled_path)? {
            let b = b?;
            while let Some(f) = from_fetch.next_if(|f| f.node < b.node) {
                writer.push(f)?;
            }
            writer.push(&b)?;
        }
        for f in from_fetch {
            writer.push(f)?;
        }
        let n_bundles = writer.finish()?;
        std::fs::remove_file(&crawled_path)?;

        let mut outputs = vec![args.out.clone(), report_path.clone()];
        if let Some(jsonl) = &args.jsonl {
            export_jsonl(&args.out, jsonl)?;
            outputs.push(jsonl.clone());
        }
        let report = TextReport {
            snapshot_id: snapshot.manifest.snapshot_id.clone(),
            documents: grouping.documents,
            unattributed_documents: grouping.skipped,
            domains_in_snapshot: dictionary.len() as u64,
            domains_with_crawled_text: with_text,
            domains_outside_snapshot: outside,
            domains_fetched: fetched.bundles.len() as u64,
            misses: fetched.misses,
            bundles: n_bundles,
        };
        write_json(&report_path, TEXT_REPORT_FORMAT, &report)?;
        println!(
            "{} bundles ({} from crawled text, {} fetched), {} domains without text",
            n_bundles,
            with_text,
            report.domains_fetched,
            report.misses.len()
        );
        let mut counters = docs.counters;
        counters.skips += grouping.skipped;
        Ok(JobOutput { outputs, counters })
    })?;
    Ok(())
}

fn export_jsonl(bundles: &Path, out: &Path) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    for b in BundleReader::open(bundles)? {
        serde_json::to_writer(&mut w, &b?)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the truncated store written next to `out`: `x.cgemb` becomes
/// `x.mrl128.cgemb`.
pub fn mrl_path(out: &Path, k: usize) -> PathBuf {
    match (out.file_stem(), out.extension()) {
        (Some(stem), Some(ext)) => {
            let mut name = stem.to_owned();
            name.push(format!(".mrl{k}."));
            name.push(ext);
            out.with_file_name(name)
        }
        _ => sibling(out, &format!(".mrl{k}")),
    }
}

/// Writes each row to the full store and, when set, its truncated
/// renormalised prefix to a second store.
struct TeeSink {
    full: EmbeddingWriter,
    truncated: Option<(usize, EmbeddingWriter)>,
}

impl RowSink for TeeSink {
    fn accept(&mut self, key: &NodeKey, row: Vec<f32>) -> Result<(), EmbeddingError> {
        if let Some((k, w)) = &mut self.truncated {
            w.push(key, &mrl_row(&row, *k))?;
        }
        self.full.push(key, &row)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedReport {
    pub provider_tag: String,
    pub dim: usize,
    pub mrl_dim: Option<usize>,
    pub rows: u64,
    pub misses: Vec<EmbeddingMiss>,
}

#[derive(Deserialize)]
struct VectorLine {
    node: NodeKey,
    vector: Vec<f32>,
}

fn load_vectors(path: &Path, dim: usize) -> anyhow::Result<HashMap<NodeKey, Vec<f32>>> {
    let file = File::open(path).input(|| format!("opening {}", path.display()))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: VectorLine = serde_json::from_str(&line).input(|| format!("{}: line {}", path.display(), i + 1))?;
        if v.vector.len() != dim {
            return Err(input_error(format!(
                "{}: line {} has {} values, expected {dim}",
                path.display(),
                i + 1,
                v.vector.len()
            )));
        }
        out.insert(v.node, v.vector);
    }
    Ok(out)
}

pub fn embed(args: EmbedArgs, ctx: &Context) -> anyhow::Result<()> {
    let dim = args.dim.unwrap_or(ctx.config.embedding_dim);
    let mrl = args.mrl.unwrap_or(ctx.config.mrl_dim);
    let seed = args.seed.unwrap_or(ctx.config.seed);
    if dim == 0 || mrl == 0 || mrl > dim {
        return Err(input_error(format!("need 0 < mrl ({mrl}) <= dim ({dim})")));
    }
    let mut inputs = vec![args.bundles.clone()];
    inputs.extend(args.vectors.clone());
    let report_path = sibling(&args.out, ".report.json");
    let truncated_path = (mrl < dim).then(|| mrl_path(&args.out, mrl));
    let spec = JobSpec {
        command: "embed",
        inputs,
        config: settings(
            &args,
            json!({ "dim": dim, "mrl": mrl, "seed": seed, "embed_batch_size": ctx.config.embed_batch_size }),
        ),
        manifest_path: file_manifest(&args.out),
        force: ctx.force,
    };
    run_job(spec, || {
        let bundles = BundleReader::open(&args.bundles).input(|| format!("reading {}", args.bundles.display()))?;
        let mut bad_bundle = None;
        let stream = bundles.map_while(|b| b.map_err(|e| bad_bundle = Some(e)).ok());

        let (tag, misses, sink) = match args.provider {
            ProviderArg::Pseudo => {
                let provider = PseudoProvider { dim, seed };
                let tag = provider.tag();
                let mut sink = tee(&args.out, dim, &tag, mrl, truncated_path.as_deref())?;
                let config = IngestConfig { batch_size: ctx.config.embed_batch_size, ..IngestConfig::default() };
                let misses = ingest_embeddings(stream, &provider, config, &mut sink)?;
                (tag, misses, sink)
            }
            ProviderArg::Jsonl => {
                let path = args.vectors.as_deref().expect("clap requires --vectors for jsonl");
                let vectors = load_vectors(path, dim)?;
                let tag = format!("jsonl/{}", path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default());
                let mut sink = tee(&args.out, dim, &tag, mrl, truncated_path.as_deref())?;
                let mut misses = Vec::new();
                for b in stream {
                    match vectors.get(&b.node) {
                        Some(v) => sink.accept(&b.node, v.clone()).input(|| format!("vector for {}", b.node))?,
                        None => misses.push(EmbeddingMiss { node: b.node.clone(), error: "no vector in input file".into() }),
                    }
                }
                (tag, misses, sink)
            }
        };
        if let Some(e) = bad_bundle {
            return Err(e).input(|| format!("reading {}", args.bundles.display()));
        }
        let rows = sink.full.finish()?;
        let mut outputs = vec![args.out.clone(), sibling(&args.out, ".json"), report_path.clone()];
        if let Some((_, w)) = sink.truncated {
            w.finish()?;
            let p = truncated_path.clone().expect("set together");
            outputs.push(sibling(&p, ".json"));
            outputs.push(p);
        }
        for m in &misses {
            tracing::warn!(node = %m.node, error = %m.error, "no embedding");
        }
        let report = EmbedReport { provider_tag: tag, dim, mrl_dim: truncated_path.as_ref().map(|_| mrl), rows, misses };
        write_json(&report_path, EMBED_REPORT_FORMAT, &report)?;
        println!("{rows} rows of dim {dim} ({} misses)", report.misses.len());
        Ok(JobOutput {
            outputs,
            counters: Counters { records: rows + report.misses.len() as u64, errors: report.misses.len() as u64, skips: 0 },
        })
    })?;
    Ok(())
}

fn tee(out: &Path, dim: usize, tag: &str, mrl: usize, truncated: Option<&Path>) -> anyhow::Result<TeeSink> {
    Ok(TeeSink {
        full: EmbeddingWriter::create(out, dim, tag)?,
        truncated: match truncated {
            Some(p) => Some((mrl, EmbeddingWriter::create(p, mrl, &format!("{tag}/mrl{mrl}"))?)),
            None => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_store_path() {
        assert_eq!(mrl_path(Path::new("a/emb.cgemb"), 128), PathBuf::from("a/emb.mrl128.cgemb"));
        assert_eq!(mrl_path(Path::new("emb"), 64), PathBuf::from("emb.mrl64"));
        assert_eq!(sibling(Path::new("x/b.cgtxt"), ".report.json"), PathBuf::from("x/b.cgtxt.report.json"));
    }
}
