//! Per-domain text samples built from WET documents.
//!
//! Documents are grouped by domain with an external sort, each domain keeps
//! its three longest and three shortest documents, and those are merged into
//! a single timestamped text. Domains without any crawled text can be filled
//! from a pluggable homepage fetcher.

use std::cmp::Reverse;
use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::archive::WetDocument;
use crate::extsort::{ExternalSorter, SortedRuns};
use crate::host::{normalize_host, NodeKey};

pub const BUNDLE_MAGIC: &[u8; 8] = b"CGTXT1\0\0";
pub const DEFAULT_MAX_CHARS: usize = 32_768;
/// Documents kept from each end of the length ordering.
pub const KEEP_PER_END: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad bundle record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeptDocument {
    pub url: String,
    pub fetch_time: DateTime<Utc>,
    pub text: String,
}

/// Representative text of one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainTextBundle {
    pub node: NodeKey,
    pub total_documents_seen: u64,
    pub documents_kept: Vec<KeptDocument>,
    pub merged_text: String,
    pub truncation_limit: usize,
}

fn timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Sort key: longest first, then URL, then the remaining fields so that the
/// order is total and independent of input order.
fn order_key(d: &WetDocument) -> (Reverse<usize>, &str, DateTime<Utc>, &str) {
    (Reverse(d.text_length), d.url.as_str(), d.fetch_time, d.text.as_str())
}

/// Bounded-state sampler: feed a domain's documents in any order, then
/// [`finish`](Self::finish) into a bundle.
#[derive(Debug, Clone)]
pub struct RepresentativeSampler {
    node: NodeKey,
    seen: u64,
    // Both kept in `order_key` order.
    longest: Vec<WetDocument>,
    shortest: Vec<WetDocument>,
}

impl RepresentativeSampler {
    pub fn new(node: NodeKey) -> Self {
        RepresentativeSampler { node, seen: 0, longest: Vec::new(), shortest: Vec::new() }
    }

    pub fn push(&mut self, doc: WetDocument) {
        self.seen += 1;
        let pos = self.longest.partition_point(|d| order_key(d) <= order_key(&doc));
        if pos < KEEP_PER_END {
            self.longest.insert(pos, doc.clone());
            self.longest.truncate(KEEP_PER_END);
        }
        let pos = self.shortest.partition_point(|d| order_key(d) <= order_key(&doc));
        if self.shortest.len() < KEEP_PER_END || pos > 0 {
            self.shortest.insert(pos, doc);
            if self.shortest.len() > KEEP_PER_END {
                self.shortest.remove(0);
            }
        }
    }

    pub fn finish(self, max_chars: usize) -> DomainTextBundle {
        // With at most six documents the two ends overlap; keep each once.
        let overlap = (2 * KEEP_PER_END).saturating_sub(self.seen as usize).min(self.shortest.len());
        let mut kept: Vec<WetDocument> = self.longest;
        kept.extend(self.shortest.into_iter().skip(overlap).rev());
        make_bundle(self.node, self.seen, kept, max_chars)
    }
}

fn make_bundle(node: NodeKey, seen: u64, kept: Vec<WetDocument>, max_chars: usize) -> DomainTextBundle {
    let merged = kept
        .iter()
        .map(|d| format!("[{}] {}", timestamp(&d.fetch_time), d.text))
        .collect::<Vec<_>>()
        .join("\n\n");
    let merged_text = match merged.char_indices().nth(max_chars) {
        Some((cut, _)) => merged[..cut].to_string(),
        None => merged,
    };
    DomainTextBundle {
        node,
        total_documents_seen: seen,
        documents_kept: kept
            .into_iter()
            .map(|d| KeptDocument { url: d.url, fetch_time: d.fetch_time, text: d.text })
            .collect(),
        merged_text,
        truncation_limit: max_chars,
    }
}

/// Keeps the three longest and three shortest documents (all of them when
/// there are six or fewer) and merges them longest-first, then the short
/// ones in ascending length, each prefixed with its fetch time. Returns
/// `None` for an empty group.
pub fn sample_representative(
    node: NodeKey,
    docs: impl IntoIterator<Item = WetDocument>,
    max_chars: usize,
) -> Option<DomainTextBundle> {
    let mut sampler = RepresentativeSampler::new(node);
    docs.into_iter().for_each(|d| sampler.push(d));
    (sampler.seen > 0).then(|| sampler.finish(max_chars))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingCounters {
    pub documents: u64,
    pub skipped: u64,
}

/// Documents sorted on disk by domain, ready to be consumed group by group.
pub struct DocumentGroups {
    runs: std::iter::Peekable<SortedRuns<(NodeKey, WetDocument)>>,
    pub counters: GroupingCounters,
}

/// Sorts documents by domain on disk, holding at most `run_capacity`
/// documents in memory. Documents whose URL does not normalise to a domain
/// are skipped and counted.
pub fn group_documents(
    docs: impl IntoIterator<Item = WetDocument>,
    scratch: Option<&Path>,
    run_capacity: usize,
) -> Result<DocumentGroups, TextError> {
    let mut sorter = ExternalSorter::new(scratch, run_capacity)?;
    let mut counters = GroupingCounters::default();
    for doc in docs {
        counters.documents += 1;
        match normalize_host(&doc.url) {
            Ok(key) => sorter.push((key, doc))?,
            Err(_) => counters.skipped += 1,
        }
    }
    Ok(DocumentGroups { runs: sorter.finish()?.peekable(), counters })
}

impl DocumentGroups {
    /// Next domain and all of its documents.
    pub fn next_group(&mut self) -> Option<Result<(NodeKey, Vec<WetDocument>), TextError>> {
        let (key, first) = match self.runs.next()? {
            Ok(x) => x,
            Err(e) => return Some(Err(e.into())),
        };
        let mut docs = vec![first];
        while let Some(Ok((k, _))) = self.runs.peek() {
            if *k != key {
                break;
            }
            let (_, d) = self.runs.next().unwrap().unwrap();
            docs.push(d);
        }
        Some(Ok((key, docs)))
    }

    /// Streams one bundle per domain without materialising whole groups.
    pub fn into_bundles(mut self, max_chars: usize) -> impl Iterator<Item = Result<DomainTextBundle, TextError>> {
        std::iter::from_fn(move || {
            let (key, first) = match self.runs.next()? {
                Ok(x) => x,
                Err(e) => return Some(Err(e.into())),
            };
            let mut sampler = RepresentativeSampler::new(key.clone());
            sampler.push(first);
            while let Some(Ok((k, _))) = self.runs.peek() {
                if *k != key {
                    break;
                }
                sampler.push(self.runs.next().unwrap().unwrap().1);
            }
            Some(Ok(sampler.finish(max_chars)))
        })
    }
}

impl Iterator for DocumentGroups {
    type Item = Result<(NodeKey, Vec<WetDocument>), TextError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_group()
    }
}

/// Text fetched from a domain's home page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedPage {
    pub url: String,
    pub fetch_time: DateTime<Utc>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum FetchError {
    #[error("no page available")]
    Absent,
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Other(String),
}

/// Source of home-page text for domains that have no crawled documents.
///
/// Implementations must be callable from several worker threads at once and
/// should honour `timeout` per request.
pub trait HomepageFetcher: Send + Sync {
    fn fetch(&self, domain: &NodeKey, timeout: Duration) -> Result<FetchedPage, FetchError>;
}

/// Offline fetcher answering from a fixed map.
#[derive(Debug, Clone, Default)]
pub struct StubFetcher {
    pages: HashMap<NodeKey, String>,
    fetch_time: DateTime<Utc>,
}

impl StubFetcher {
    pub fn new(pages: HashMap<NodeKey, String>, fetch_time: DateTime<Utc>) -> Self {
        StubFetcher { pages, fetch_time }
    }

    /// Loads a JSON object `{ "<node key>": "<text>", ... }`.
    pub fn from_json_file(path: impl AsRef<Path>, fetch_time: DateTime<Utc>) -> Result<Self, TextError> {
        let pages = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(StubFetcher::new(pages, fetch_time))
    }
}

impl HomepageFetcher for StubFetcher {
    fn fetch(&self, domain: &NodeKey, _timeout: Duration) -> Result<FetchedPage, FetchError> {
        self.pages
            .get(domain)
            .map(|text| FetchedPage {
                url: format!("https://{}/", domain.host()),
                fetch_time: self.fetch_time,
                text: text.clone(),
            })
            .ok_or(FetchError::Absent)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FetchConfig {
    pub max_in_flight: usize,
    pub timeout: Duration,
    pub max_chars: usize,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig { max_in_flight: 8, timeout: Duration::from_secs(10), max_chars: DEFAULT_MAX_CHARS }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchMiss {
    pub domain: NodeKey,
    pub reason: FetchError,
}

#[derive(Debug, Clone, Default)]
pub struct FetchOutcome {
    pub bundles: Vec<DomainTextBundle>,
    pub misses: Vec<FetchMiss>,
}

/// Asks `fetcher` for each text-less domain with at most
/// `config.max_in_flight` requests running. Failures are recorded per domain
/// and never abort the run. Output keeps the input order.
pub fn fetch_missing(domains: &[NodeKey], fetcher: &dyn HomepageFetcher, config: FetchConfig) -> FetchOutcome {
    let results: Mutex<Vec<Option<Result<FetchedPage, FetchError>>>> = Mutex::new(vec![None; domains.len()]);
    let next = AtomicUsize::new(0);
    let workers = config.max_in_flight.clamp(1, domains.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(domain) = domains.get(i) else { break };
                let r = fetcher.fetch(domain, config.timeout);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });

    let mut outcome = FetchOutcome::default();
    for (domain, result) in domains.iter().zip(results.into_inner().unwrap()) {
        match result.expect("every index is visited") {
            Ok(page) => {
                let doc = WetDocument::new(page.url, page.fetch_time, page.text);
                outcome.bundles.push(make_bundle(domain.clone(), 1, vec![doc], config.max_chars));
            }
            Err(reason) => outcome.misses.push(FetchMiss { domain: domain.clone(), reason }),
        }
    }
    outcome
}

/// Writes length-prefixed bundle records after a `CGTXT1` header.
pub struct BundleWriter {
    out: BufWriter<File>,
    count: u64,
}

impl BundleWriter {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(BUNDLE_MAGIC)?;
        Ok(BundleWriter { out, count: 0 })
    }

    pub fn push(&mut self, bundle: &DomainTextBundle) -> Result<(), TextError> {
        let bytes = serde_json::to_vec(bundle)?;
        self.out.write_all(&(bytes.len() as u32).to_le_bytes())?;
        self.out.write_all(&bytes)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<u64> {
        self.out.flush()?;
        Ok(self.count)
    }
}

pub struct BundleReader {
    input: BufReader<File>,
}

impl BundleReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let mut input = BufReader::new(File::open(path.as_ref())?);
        let mut magic = [0u8; 8];
        input
            .read_exact(&mut magic)
            .map_err(|_| TextError::Format("file shorter than bundle-store header".into()))?;
        if &magic != BUNDLE_MAGIC {
            return Err(TextError::Format(format!(
                "{}: expected CGTXT1 header",
                path.as_ref().display()
            )));
        }
        Ok(BundleReader { input })
    }
}

impl Iterator for BundleReader {
    type Item = Result<DomainTextBundle, TextError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut len = [0u8; 4];
        match self.input.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return None,
            Err(e) => return Some(Err(e.into())),
        }
        let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
        if let Err(e) = self.input.read_exact(&mut buf) {
            return Some(Err(e.into()));
        }
        Some(serde_json::from_slice(&buf).map_err(TextError::from))
    }
}

/// Exports bundles as JSON lines for external embedding jobs.
pub fn write_jsonl<'a>(path: impl AsRef<Path>, bundles: impl IntoIterator<Item = &'a DomainTextBundle>) -> Result<(), TextError> {
    let mut w = BufWriter::new(File::create(path)?);
    for b in bundles {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn doc(url: &str, len: usize, minute: u32) -> WetDocument {
        WetDocument::new(
            url,
            Utc.with_ymd_and_hms(2024, 12, 2, 0, minute, 0).unwrap(),
            "x".repeat(len),
        )
    }

    fn key(s: &str) -> NodeKey {
        s.parse().unwrap()
    }

    fn kept_lengths(b: &DomainTextBundle) -> Vec<usize> {
        b.documents_kept.iter().map(|d| d.text.chars().count()).collect()
    }

    #[test]
    fn three_longest_three_shortest() {
        let docs: Vec<_> = (1..=10).map(|l| doc(&format!("https://a.com/{l}"), l, l as u32)).collect();
        let b = sample_representative(key("com.a"), docs, DEFAULT_MAX_CHARS).unwrap();
        assert_eq!(kept_lengths(&b), [10, 9, 8, 1, 2, 3]);
        assert_eq!(b.total_documents_seen, 10);
    }

    #[test]
    fn small_groups_kept_once() {
        let docs: Vec<_> = (1..=4).map(|l| doc(&format!("https://a.com/{l}"), l, l as u32)).collect();
        let b = sample_representative(key("com.a"), docs, DEFAULT_MAX_CHARS).unwrap();
        assert_eq!(kept_lengths(&b), [4, 3, 2, 1]);
        let one = sample_representative(key("com.a"), [doc("https://a.com/", 5, 0)], DEFAULT_MAX_CHARS).unwrap();
        assert_eq!(kept_lengths(&one), [5]);
        assert!(sample_representative(key("com.a"), Vec::new(), 10).is_none());
    }

    #[test]
    fn ties_broken_by_url() {
        let docs = vec![doc("https://a.com/c", 5, 0), doc("https://a.com/a", 5, 1), doc("https://a.com/b", 5, 2)];
        let mut rev = docs.clone();
        rev.reverse();
        let b1 = sample_representative(key("com.a"), docs, 100).unwrap();
        let b2 = sample_representative(key("com.a"), rev, 100).unwrap();
        assert_eq!(b1, b2);
        let urls: Vec<_> = b1.documents_kept.iter().map(|d| d.url.as_str()).collect();
        assert_eq!(urls, ["https://a.com/a", "https://a.com/b", "https://a.com/c"]);
    }

    #[test]
    fn merged_text_carries_timestamps_and_truncates() {
        let docs = vec![doc("https://a.com/1", 3, 1), doc("https://a.com/2", 4, 2)];
        let b = sample_representative(key("com.a"), docs.clone(), DEFAULT_MAX_CHARS).unwrap();
        assert_eq!(b.merged_text, "[2024-12-02T00:02:00Z] xxxx\n\n[2024-12-02T00:01:00Z] xxx");
        let short = sample_representative(key("com.a"), docs, 10).unwrap();
        assert_eq!(short.merged_text.chars().count(), 10);
    }

    #[test]
    fn grouping() {
        let docs = vec![
            doc("https://a.com/1", 1, 0),
            doc("https://b.com/1", 1, 0),
            doc("https://a.com/2", 1, 0),
            doc("http://10.1.1.1/", 1, 0),
            doc("https://a.com/3", 1, 0),
        ];
        let mut groups = group_documents(docs, None, 2).unwrap();
        assert_eq!(groups.counters, GroupingCounters { documents: 5, skipped: 1 });
        let mut sizes = Vec::new();
        while let Some(g) = groups.next_group() {
            let (k, d) = g.unwrap();
            sizes.push((k.to_string(), d.len()));
        }
        assert_eq!(sizes, [("com.a".to_string(), 3), ("com.b".to_string(), 1)]);
    }

    #[test]
    fn stub_fetcher_semantics() {
        let t = Utc.with_ymd_and_hms(2024, 12, 2, 0, 0, 0).unwrap();
        let stub = StubFetcher::new(HashMap::from([(key("com.a"), "hello".to_string())]), t);
        let out = fetch_missing(&[key("com.a"), key("com.b")], &stub, FetchConfig::default());
        assert_eq!(out.bundles.len(), 1);
        assert_eq!(out.bundles[0].merged_text, "[2024-12-02T00:00:00Z] hello");
        assert_eq!(out.misses, [FetchMiss { domain: key("com.b"), reason: FetchError::Absent }]);
        let none = fetch_missing(&[], &stub, FetchConfig::default());
        assert!(none.bundles.is_empty() && none.misses.is_empty());
    }

    #[test]
    fn bundle_store_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.cgtxt");
        let b = sample_representative(key("com.a"), [doc("https://a.com/1", 3, 1)], 100).unwrap();
        let mut w = BundleWriter::create(&p).unwrap();
        w.push(&b).unwrap();
        assert_eq!(w.finish().unwrap(), 1);
        let back: Vec<_> = BundleReader::open(&p).unwrap().map(Result::unwrap).collect();
        assert_eq!(back, [b]);
        std::fs::write(&p, b"CGTXT2\0\0").unwrap();
        assert!(BundleReader::open(&p).is_err());
    }
}
