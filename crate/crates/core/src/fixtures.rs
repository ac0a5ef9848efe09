//! Deterministic synthetic inputs with recorded ground truth: crawl corpora
//! (WAT, WET, label file, homepage map), random graphs, two-month snapshot
//! pairs and regression tasks.
//!
//! Every generator draws from [`SplitMix64`] only, so outputs depend on the
//! seed alone. Ground truth is computed from the generator's own host lists,
//! never through the pipeline code it is meant to check.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifact::write_json;
use crate::archive::{PageLink, RecordType, WarcRecord};
use crate::embedding::EmbeddingMatrix;
use crate::host::NodeKey;
use crate::labels::CredibilityLabel;
use crate::rng::SplitMix64;

/// Writers for WARC-framed records.
pub mod warc {
    use std::io::{self, Write};

    use flate2::write::GzEncoder;
    use flate2::Compression;

    use crate::archive::WarcRecord;

    /// `WARC/1.0`, the header block, a blank line, the payload and the
    /// CRLF CRLF record separator.
    pub fn write_plain_record<W: Write>(out: &mut W, record: &WarcRecord) -> io::Result<()> {
        out.write_all(b"WARC/1.0\r\n")?;
        for (k, v) in &record.headers {
            write!(out, "{k}: {v}\r\n")?;
        }
        out.write_all(b"\r\n")?;
        out.write_all(&record.payload)?;
        out.write_all(b"\r\n\r\n")
    }

    /// The same bytes as [`write_plain_record`], as one gzip member.
    pub fn write_gzip_record<W: Write>(out: &mut W, record: &WarcRecord) -> io::Result<()> {
        let mut enc = GzEncoder::new(out, Compression::fast());
        write_plain_record(&mut enc, record)?;
        enc.finish()?;
        Ok(())
    }
}

/// Reversed-label key of a lowercase host, computed without the host
/// normaliser.
pub fn reversed(host: &str) -> String {
    host.split('.').rev().collect::<Vec<_>>().join(".")
}

const WORDS: &[&str] = &[
    "river", "signal", "market", "report", "daily", "civic", "harbor", "ledger", "forum", "press", "metro", "valley",
    "summit", "bridge", "beacon", "courier", "herald", "tribune", "gazette", "journal", "review", "digest", "post",
    "times", "observer", "monitor", "sentinel", "chronicle", "record", "voice",
];
const TLDS: &[&str] = &["com", "org", "net", "co.uk", "de", "info", "news"];
const SUBDOMAINS: &[&str] = &["www", "news", "blog", "m", "en"];
const REJECTED_TARGETS: &[&str] = &[
    "http://192.0.2.7/index.html",
    "http://[2001:db8::1]/x",
    "http://localhost/admin",
    "http://intranet/home",
];

/// Deterministic pool of distinct lowercase host names.
pub fn host_pool(n: usize, rng: &mut SplitMix64) -> Vec<String> {
    (0..n)
        .map(|i| {
            let word = WORDS[rng.below(WORDS.len() as u64) as usize];
            let tld = TLDS[rng.below(TLDS.len() as u64) as usize];
            let base = format!("{word}{i}.{tld}");
            if rng.next_f64() < 0.2 {
                format!("{}.{base}", SUBDOMAINS[rng.below(SUBDOMAINS.len() as u64) as usize])
            } else {
                base
            }
        })
        .collect()
}

/// Index skewed toward 0, giving a few hubs and a long tail.
fn skewed(rng: &mut SplitMix64, n: usize) -> usize {
    let u = rng.next_f64();
    ((u * u * n as f64) as usize).min(n - 1)
}

fn spell_url(rng: &mut SplitMix64, host: &str, path: &str) -> String {
    match rng.below(6) {
        0 => format!("HTTPS://{}/{path}", host.to_ascii_uppercase()),
        1 => format!("http://{host}:8080/{path}"),
        2 => format!("https://{host}./{path}"),
        _ => format!("https://{host}/{path}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkEntry {
    /// WAT path tag, e.g. `A@/href` or `IMG@/src`.
    pub path: String,
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixturePage {
    pub host: String,
    pub url: String,
    pub fetch_time: DateTime<Utc>,
    pub links: Vec<LinkEntry>,
    pub head_links: Vec<LinkEntry>,
    /// `None` when the page has no WET record.
    pub text: Option<String>,
    pub languages: Option<String>,
}

impl FixturePage {
    pub fn wat_record(&self) -> WarcRecord {
        let links: Vec<_> = self
            .links
            .iter()
            .map(|l| match &l.url {
                Some(u) => json!({ "path": l.path, "url": u }),
                None => json!({ "path": l.path }),
            })
            .collect();
        let head: Vec<_> = self
            .head_links
            .iter()
            .map(|l| json!({ "path": l.path, "url": l.url, "rel": "stylesheet" }))
            .collect();
        let envelope = json!({
            "Envelope": {
                "Format": "WARC",
                "WARC-Header-Metadata": { "WARC-Type": "response", "WARC-Target-URI": self.url },
                "Payload-Metadata": {
                    "HTTP-Response-Metadata": {
                        "Response-Message": { "Status": "200" },
                        "HTML-Metadata": { "Head": { "Title": self.host, "Link": head }, "Links": links }
                    }
                }
            }
        });
        WarcRecord::new(
            RecordType::Metadata,
            Some(&self.url),
            self.fetch_time,
            &[("Content-Type", "application/json")],
            serde_json::to_vec(&envelope).expect("json"),
        )
    }

    pub fn wet_record(&self) -> Option<WarcRecord> {
        let text = self.text.as_ref()?;
        let mut extra = vec![("Content-Type", "text/plain")];
        if let Some(lang) = &self.languages {
            extra.push(("WARC-Identified-Content-Language", lang.as_str()));
        }
        Some(WarcRecord::new(RecordType::Conversion, Some(&self.url), self.fetch_time, &extra, text.clone().into_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrawlFixtureConfig {
    pub domains: usize,
    /// Anchor entries across all pages, including relative, self and
    /// unusable ones.
    pub links: usize,
    pub seed: u64,
    pub crawl_start: DateTime<Utc>,
    pub records_per_file: usize,
    pub label_fraction: f64,
}

impl Default for CrawlFixtureConfig {
    fn default() -> Self {
        CrawlFixtureConfig {
            domains: 200,
            links: 10_000,
            seed: 7,
            crawl_start: Utc.with_ymd_and_hms(2024, 12, 2, 0, 0, 0).unwrap(),
            records_per_file: 250,
            label_fraction: 0.5,
        }
    }
}

/// Graph facts computed by brute force from the generator's host lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphTruth {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

impl GraphTruth {
    /// `(nodes, edges, isolated, leaves, min_degree, max_degree)` with
    /// degree = in + out.
    pub fn degree_facts(&self) -> DegreeFacts {
        let mut deg: HashMap<&str, u64> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for (s, d) in &self.edges {
            *deg.get_mut(s.as_str()).expect("edge source is a node") += 1;
            *deg.get_mut(d.as_str()).expect("edge target is a node") += 1;
        }
        DegreeFacts {
            nodes: self.nodes.len() as u64,
            edges: self.edges.len() as u64,
            isolated: deg.values().filter(|&&d| d == 0).count() as u64,
            leaves: deg.values().filter(|&&d| d == 1).count() as u64,
            min_degree: deg.values().copied().min().unwrap_or(0),
            max_degree: deg.values().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeFacts {
    pub nodes: u64,
    pub edges: u64,
    pub isolated: u64,
    pub leaves: u64,
    pub min_degree: u64,
    pub max_degree: u64,
}

#[derive(Debug, Clone)]
pub struct CrawlFixture {
    pub config: CrawlFixtureConfig,
    pub hosts: Vec<String>,
    pub pages: Vec<FixturePage>,
    pub truth: GraphTruth,
    /// Anchor links that survive extraction (absolute, with a host).
    pub extracted_anchor_links: u64,
    pub non_anchor_links: u64,
    /// Node key to text of its fallback homepage.
    pub homepages: BTreeMap<String, String>,
    pub labels: Vec<LabelRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub domain: String,
    pub pc1: Option<f64>,
    pub mbfc: Option<f64>,
}

fn words(rng: &mut SplitMix64, n: usize) -> String {
    (0..n).map(|_| WORDS[rng.below(WORDS.len() as u64) as usize]).collect::<Vec<_>>().join(" ")
}

/// Builds the in-memory crawl: pages, links and texts.
pub fn generate_crawl(config: CrawlFixtureConfig) -> CrawlFixture {
    assert!(config.domains >= 2, "need at least two domains");
    let mut rng = SplitMix64::new(config.seed);
    let hosts = host_pool(config.domains, &mut rng);
    let mut truth = GraphTruth::default();

    // Roughly 85% of hosts are crawled; the rest appear only as link targets.
    let mut pages = Vec::new();
    for (i, host) in hosts.iter().enumerate() {
        if i > 0 && rng.next_f64() >= 0.85 {
            continue;
        }
        let n_pages = 1 + rng.below(4) as usize;
        for p in 0..n_pages {
            let url = format!("https://{host}/page/{p}");
            let fetch_time = config.crawl_start + Duration::seconds(rng.below(6 * 86_400) as i64);
            let text = (rng.next_f64() < 0.8).then(|| {
                let len = if rng.next_f64() < 0.1 { 400 + rng.below(1200) } else { 3 + rng.below(120) };
                words(&mut rng, len as usize)
            });
            let languages = match rng.below(3) {
                0 => None,
                1 => Some("eng".to_string()),
                _ => Some("eng,deu".to_string()),
            };
            truth.nodes.insert(reversed(host));
            pages.push(FixturePage { host: host.clone(), url, fetch_time, links: vec![], head_links: vec![], text, languages });
        }
    }

    let mut extracted = 0u64;
    for k in 0..config.links {
        let pick = rng.below(pages.len() as u64) as usize;
        let page = &mut pages[pick];
        let src = reversed(&page.host);
        let roll = rng.next_f64();
        let url = if roll < 0.02 {
            None
        } else if roll < 0.04 {
            Some(format!("mailto:editor{k}@{}", page.host))
        } else if roll < 0.08 {
            Some(REJECTED_TARGETS[rng.below(REJECTED_TARGETS.len() as u64) as usize].to_string())
        } else if roll < 0.18 {
            Some(format!("/section/{k}"))
        } else {
            let target = &hosts[skewed(&mut rng, hosts.len())];
            Some(spell_url(&mut rng, target, &format!("a/{k}")))
        };
        if let Some(u) = &url {
            if !u.starts_with("mailto:") {
                extracted += 1;
                let target_host = if u.starts_with('/') {
                    Some(page.host.clone())
                } else {
                    let rest = u.split_once("://").map(|(_, r)| r).unwrap_or(u);
                    let host = rest.split(['/', ':']).next().unwrap_or("").trim_end_matches('.').to_ascii_lowercase();
                    hosts.contains(&host).then_some(host)
                };
                if let Some(t) = target_host {
                    let dst = reversed(&t);
                    truth.nodes.insert(dst.clone());
                    if dst != src {
                        truth.edges.insert((src.clone(), dst));
                    }
                }
            }
        }
        page.links.push(LinkEntry { path: "A@/href".into(), url });
    }

    // Image and stylesheet links that only count with `include_all_links`.
    let mut non_anchor = 0;
    for page in &mut pages {
        for _ in 0..rng.below(3) {
            let target = &hosts[rng.below(hosts.len() as u64) as usize];
            page.links.push(LinkEntry { path: "IMG@/src".into(), url: Some(format!("https://{target}/img.png")) });
            non_anchor += 1;
        }
        if rng.next_f64() < 0.3 {
            page.head_links.push(LinkEntry { path: "LINK@/href".into(), url: Some("/static/site.css".into()) });
            non_anchor += 1;
        }
    }

    let with_text: BTreeSet<String> =
        pages.iter().filter(|p| p.text.is_some()).map(|p| reversed(&p.host)).collect();
    let mut homepages = BTreeMap::new();
    for key in truth.nodes.iter().filter(|k| !with_text.contains(*k)) {
        if rng.next_f64() < 0.7 {
            let host = reversed(key);
            homepages.insert(key.clone(), format!("Welcome to {host}. {}", words(&mut rng, 20)));
        }
    }

    let mut labels = Vec::new();
    for key in &truth.nodes {
        if rng.next_f64() < config.label_fraction {
            let pc1 = (rng.next_f64() * 1000.0).round() / 1000.0;
            let mbfc = if rng.next_f64() < 0.1 {
                None
            } else {
                Some(((pc1 + 0.1 * rng.next_normal()).clamp(0.0, 1.0) * 1000.0).round() / 1000.0)
            };
            labels.push(LabelRow { domain: reversed(key), pc1: Some(pc1), mbfc });
        }
    }
    labels.push(LabelRow { domain: "unlisted-outlet.example".into(), pc1: Some(0.5), mbfc: Some(0.5) });

    CrawlFixture {
        config,
        hosts,
        pages,
        truth,
        extracted_anchor_links: extracted,
        non_anchor_links: non_anchor,
        homepages,
        labels,
    }
}

fn warcinfo(date: DateTime<Utc>, filename: &str) -> WarcRecord {
    WarcRecord::new(
        RecordType::Warcinfo,
        None,
        date,
        &[("WARC-Filename", filename), ("Content-Type", "application/warc-fields")],
        b"software: credigraph-fixtures\r\nformat: WARC File Format 1.0\r\n".to_vec(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTruth {
    pub record_type: String,
    pub target_uri: Option<String>,
    pub payload_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileTruth {
    pub path: PathBuf,
    pub records: Vec<RecordTruth>,
}

pub const GROUND_TRUTH_FORMAT: &str = "CGTRUTH1";

/// Written corpus layout plus everything a test needs to check it; stored as
/// `ground_truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlGroundTruth {
    pub config: CrawlFixtureConfig,
    pub wat_files: Vec<FileTruth>,
    pub wet_files: Vec<FileTruth>,
    pub labels_csv: PathBuf,
    pub homepages_json: PathBuf,
    pub pages: u64,
    pub wet_documents: u64,
    pub extracted_anchor_links: u64,
    pub non_anchor_links: u64,
    pub graph: DegreeFacts,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub label_rows: u64,
    pub homepages: u64,
}

fn write_archive(path: &Path, records: &[WarcRecord]) -> io::Result<FileTruth> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        warc::write_gzip_record(&mut out, r)?;
    }
    out.flush()?;
    Ok(FileTruth {
        path: path.to_path_buf(),
        records: records
            .iter()
            .map(|r| RecordTruth {
                record_type: r.record_type.to_string(),
                target_uri: r.target_uri.clone(),
                payload_len: r.payload.len() as u64,
            })
            .collect(),
    })
}

impl CrawlFixture {
    /// All WAT files as record lists, each led by a `warcinfo` record.
    pub fn wat_files(&self) -> Vec<(String, Vec<WarcRecord>)> {
        self.split_files("wat", |p| Some(p.wat_record()))
    }

    pub fn wet_files(&self) -> Vec<(String, Vec<WarcRecord>)> {
        self.split_files("wet", FixturePage::wet_record)
    }

    fn split_files(&self, kind: &str, f: impl Fn(&FixturePage) -> Option<WarcRecord>) -> Vec<(String, Vec<WarcRecord>)> {
        let per = self.config.records_per_file.max(1);
        self.pages
            .chunks(per)
            .enumerate()
            .map(|(i, chunk)| {
                let name = format!("FIXTURE-{}-{i:05}.warc.{kind}.gz", self.config.seed);
                let mut records = vec![warcinfo(self.config.crawl_start, &name)];
                records.extend(chunk.iter().filter_map(&f));
                (name, records)
            })
            .collect()
    }

    /// Writes `wat/`, `wet/`, `labels.csv`, `homepages.json` and
    /// `ground_truth.json` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> io::Result<CrawlGroundTruth> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("wat"))?;
        fs::create_dir_all(dir.join("wet"))?;
        let wat_files = self
            .wat_files()
            .into_iter()
            .map(|(name, recs)| write_archive(&dir.join("wat").join(name), &recs))
            .collect::<io::Result<Vec<_>>>()?;
        let wet_files = self
            .wet_files()
            .into_iter()
            .map(|(name, recs)| write_archive(&dir.join("wet").join(name), &recs))
            .collect::<io::Result<Vec<_>>>()?;

        let labels_csv = dir.join("labels.csv");
        let mut out = BufWriter::new(File::create(&labels_csv)?);
        writeln!(out, "domain,pc1,mbfc")?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for l in &self.labels {
            writeln!(out, "{},{},{}", l.domain, fmt(l.pc1), fmt(l.mbfc))?;
        }
        writeln!(out, "not a domain,0.5,0.5")?;
        out.flush()?;

        let homepages_json = dir.join("homepages.json");
        serde_json::to_writer_pretty(File::create(&homepages_json)?, &self.homepages)?;

        let truth = CrawlGroundTruth {
            config: self.config,
            wat_files,
            wet_files,
            labels_csv,
            homepages_json,
            pages: self.pages.len() as u64,
            wet_documents: self.pages.iter().filter(|p| p.text.is_some()).count() as u64,
            extracted_anchor_links: self.extracted_anchor_links,
            non_anchor_links: self.non_anchor_links,
            graph: self.truth.degree_facts(),
            nodes: self.truth.nodes.iter().cloned().collect(),
            edges: self.truth.edges.iter().cloned().collect(),
            label_rows: self.labels.len() as u64,
            homepages: self.homepages.len() as u64,
        };
        write_json(dir.join("ground_truth.json"), GROUND_TRUTH_FORMAT, &truth).map_err(io::Error::other)?;
        Ok(truth)
    }
}

/// Page URLs and extracted links for graph-construction checks, with the
/// expected node and edge sets.
#[derive(Debug, Clone)]
pub struct LinkFixture {
    pub pages: Vec<String>,
    pub links: Vec<PageLink>,
    pub truth: GraphTruth,
}

pub fn random_links(n_hosts: usize, n_links: usize, seed: u64) -> LinkFixture {
    let mut rng = SplitMix64::new(seed);
    let hosts = host_pool(n_hosts.max(2), &mut rng);
    let mut truth = GraphTruth::default();
    let mut pages = Vec::new();
    for h in hosts.iter().filter(|_| rng.next_f64() < 0.5) {
        pages.push(format!("https://{h}/"));
        truth.nodes.insert(reversed(h));
    }
    let mut links = Vec::with_capacity(n_links);
    for k in 0..n_links {
        let src = &hosts[skewed(&mut rng, hosts.len())];
        let path = format!("p/{}", rng.below(50));
        let source_url = spell_url(&mut rng, src, &path);
        truth.nodes.insert(reversed(src));
        let target_url = if rng.next_f64() < 0.05 {
            REJECTED_TARGETS[rng.below(REJECTED_TARGETS.len() as u64) as usize].to_string()
        } else {
            let dst = &hosts[skewed(&mut rng, hosts.len())];
            truth.nodes.insert(reversed(dst));
            if dst != src {
                truth.edges.insert((reversed(src), reversed(dst)));
            }
            spell_url(&mut rng, dst, &format!("t/{k}"))
        };
        links.push(PageLink { source_url, target_url });
    }
    LinkFixture { pages, links, truth }
}

/// `m` distinct directed edges without self-loops over `n` nodes, with
/// skewed endpoints. `m` is capped at `n (n - 1)`.
pub fn random_edges(n: u64, m: u64, seed: u64) -> Vec<(u64, u64)> {
    let mut rng = SplitMix64::new(seed);
    let cap = n.saturating_mul(n.saturating_sub(1));
    let m = m.min(cap);
    let mut set = BTreeSet::new();
    let mut attempts = 0u64;
    while (set.len() as u64) < m {
        attempts += 1;
        let (s, d) = if attempts < 20 * m {
            (skewed(&mut rng, n as usize) as u64, rng.below(n))
        } else {
            (rng.below(n), rng.below(n))
        };
        if s != d {
            set.insert((s, d));
        }
    }
    let mut edges: Vec<_> = set.into_iter().collect();
    rng.shuffle(&mut edges);
    edges
}

/// One month of a planted two-month pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthGraph {
    pub keys: Vec<NodeKey>,
    /// Ids index into `keys`.
    pub edges: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffFixture {
    pub prev: MonthGraph,
    pub next: MonthGraph,
    pub overlap: u64,
    pub new_nodes: u64,
    pub vanished: u64,
    pub increased: u64,
    pub decreased: u64,
}

impl DiffFixture {
    pub fn increased_fraction(&self) -> f64 {
        self.increased as f64 / self.overlap as f64
    }
}

/// Two months sharing `overlap` hosts; exactly `increased` of the shared
/// hosts gain out-degree and exactly `decreased` lose some.
pub fn diff_fixture(overlap: u64, only_prev: u64, only_next: u64, increased: u64, decreased: u64, seed: u64) -> DiffFixture {
    assert!(increased + decreased <= overlap, "planted changes exceed the overlap");
    // Out-degrees go up to 7, so each month needs at least 8 hosts.
    assert!(overlap >= 8, "overlap too small to realise planted degrees");
    let mut rng = SplitMix64::new(seed);
    let shared: Vec<String> = (0..overlap).map(|i| format!("shared{i}.example.com")).collect();
    let prev_only: Vec<String> = (0..only_prev).map(|i| format!("gone{i}.example.org")).collect();
    let next_only: Vec<String> = (0..only_next).map(|i| format!("fresh{i}.example.net")).collect();

    let mut roles: Vec<u8> = (0..overlap)
        .map(|i| if i < increased { 1 } else if i < increased + decreased { 2 } else { 0 })
        .collect();
    rng.shuffle(&mut roles);

    let mut prev_deg: HashMap<&str, u64> = HashMap::new();
    let mut next_deg: HashMap<&str, u64> = HashMap::new();
    for (h, role) in shared.iter().zip(&roles) {
        let base = 1 + rng.below(4);
        let (p, n) = match role {
            1 => (base, base + 1 + rng.below(3)),
            2 => (base, base - 1 - rng.below(base)),
            _ => (base, base),
        };
        prev_deg.insert(h, p);
        next_deg.insert(h, n);
    }
    for h in &prev_only {
        prev_deg.insert(h, rng.below(4));
    }
    for h in &next_only {
        next_deg.insert(h, rng.below(4));
    }

    let mut month = |hosts: Vec<&String>, deg: &HashMap<&str, u64>| {
        let mut keys: Vec<NodeKey> = hosts.iter().map(|h| NodeKey::from_host(h).expect("valid host")).collect();
        keys.sort();
        let index: HashMap<String, u64> = keys.iter().enumerate().map(|(i, k)| (k.host(), i as u64)).collect();
        let n = keys.len() as u64;
        let mut edges = Vec::new();
        for h in hosts {
            let src = index[h.as_str()];
            let d = deg[h.as_str()].min(n - 1);
            let mut targets = BTreeSet::new();
            while (targets.len() as u64) < d {
                let t = rng.below(n);
                if t != src {
                    targets.insert(t);
                }
            }
            edges.extend(targets.into_iter().map(|t| (src, t)));
        }
        edges.sort();
        MonthGraph { keys, edges }
    };
    let prev = month(shared.iter().chain(&prev_only).collect(), &prev_deg);
    let next = month(shared.iter().chain(&next_only).collect(), &next_deg);
    DiffFixture { prev, next, overlap, new_nodes: only_next, vanished: only_prev, increased, decreased }
}

/// Synthetic embedding regression task; `weights` is empty for the
/// no-signal control.
#[derive(Debug, Clone)]
pub struct RegressionTask {
    pub features: EmbeddingMatrix,
    pub labels: Vec<CredibilityLabel>,
    pub weights: Vec<f64>,
}

fn task_key(i: usize) -> NodeKey {
    NodeKey::from_host(&format!("n{i:05}.task.example")).expect("valid host")
}

fn gaussian_features(rng: &mut SplitMix64, n: usize, dim: usize) -> (EmbeddingMatrix, Vec<Vec<f64>>) {
    let mut m = EmbeddingMatrix::new(dim, "synthetic-gaussian");
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        m.insert(task_key(i), x.iter().map(|&v| v as f32).collect()).expect("finite row");
        rows.push(x.iter().map(|&v| v as f32 as f64).collect());
    }
    (m, rows)
}

/// Features `x ~ N(0, I)`, weights `w ~ N(0, I / dim)` and labels
/// `clamp(sigmoid(w . x) + e, 0, 1)` with `e ~ N(0, noise_sd^2)`. Both score
/// columns carry the same label.
pub fn signal_task(n: usize, dim: usize, noise_sd: f64, seed: u64) -> RegressionTask {
    let mut rng = SplitMix64::new(seed);
    let weights: Vec<f64> = (0..dim).map(|_| rng.next_normal() / (dim as f64).sqrt()).collect();
    let (features, rows) = gaussian_features(&mut rng, n, dim);
    let labels = rows
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let z: f64 = x.iter().zip(&weights).map(|(a, b)| a * b).sum();
            let y = (1.0 / (1.0 + (-z).exp()) + noise_sd * rng.next_normal()).clamp(0.0, 1.0);
            CredibilityLabel { node: task_key(i), pc1: Some(y), mbfc: Some(y) }
        })
        .collect();
    RegressionTask { features, labels, weights }
}

/// Gaussian features with labels drawn uniformly from `[0, 1]`,
/// independently of the features.
pub fn noise_task(n: usize, dim: usize, seed: u64) -> RegressionTask {
    let mut rng = SplitMix64::new(seed);
    let (features, _) = gaussian_features(&mut rng, n, dim);
    let labels = (0..n)
        .map(|i| {
            let y = rng.next_f64();
            CredibilityLabel { node: task_key(i), pc1: Some(y), mbfc: Some(y) }
        })
        .collect();
    RegressionTask { features, labels, weights: Vec::new() }
}
