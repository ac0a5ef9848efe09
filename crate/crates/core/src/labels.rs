//! Domain credibility labels: loading, joining onto a graph, and stratified
//! train/validation/test splits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifact::{read_json, write_json, ArtifactError};
use crate::graph::{NodeDictionary, NodeId};
use crate::host::{normalize_host, NodeKey};
use crate::rng::SplitMix64;

pub const SPLIT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];
pub const STRATA: usize = 10;
/// Strata smaller than this are pooled instead of cut on their own.
pub const MIN_STRATUM: usize = 3;
pub const MIN_LABELS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("cannot read label file: {0}")]
    Csv(#[from] csv::Error),
    #[error("label file is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    Ratios([f64; 3]),
    #[error("need at least {needed} labels with a {target} score, found {found}")]
    TooFewLabels { target: Target, needed: usize, found: usize },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Pc1,
    Mbfc,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Pc1 => "pc1",
            Target::Mbfc => "mbfc",
        })
    }
}

impl std::str::FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pc1" => Ok(Target::Pc1),
            "mbfc" => Ok(Target::Mbfc),
            other => Err(format!("unknown target `{other}` (expected pc1 or mbfc)")),
        }
    }
}

/// Credibility scores of one domain; higher means more credible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilityLabel {
    pub node: NodeKey,
    pub pc1: Option<f64>,
    pub mbfc: Option<f64>,
}

impl CredibilityLabel {
    pub fn score(&self, target: Target) -> Option<f64> {
        match target {
            Target::Pc1 => self.pc1,
            Target::Mbfc => self.mbfc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows: u64,
    pub accepted: u64,
    pub rejected: Vec<RejectedRow>,
    pub duplicates: Vec<NodeKey>,
}

fn parse_score(raw: Option<&str>) -> Result<Option<f64>, String> {
    let raw = raw.map(str::trim).unwrap_or("");
    if raw.is_empty() || raw.eq_ignore_ascii_case("nan") || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let v: f64 = raw.parse().map_err(|_| format!("unparseable score {raw:?}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("score {v} outside [0, 1]"));
    }
    Ok(Some(v))
}

fn domain_key(raw: &str) -> Result<NodeKey, String> {
    let raw = raw.trim();
    let url = if raw.contains("://") { raw.to_string() } else { format!("http://{raw}") };
    normalize_host(&url).map_err(|e| format!("domain {raw:?}: {e}"))
}

/// Reads a delimited label file with (at least) `domain`, `pc1` and `mbfc`
/// columns. Bad rows are reported, not fatal; a repeated domain keeps its
/// last row.
pub fn load_dqr(path: impl AsRef<Path>) -> Result<(Vec<CredibilityLabel>, LoadReport), LabelError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(LabelError::MissingColumn(name))
    };
    let (c_domain, c_pc1, c_mbfc) = (column("domain")?, column("pc1")?, column("mbfc")?);

    let mut labels: Vec<CredibilityLabel> = Vec::new();
    let mut index: HashMap<NodeKey, usize> = HashMap::new();
    let mut report = LoadReport::default();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        report.rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let parsed = (|| {
            let node = domain_key(record.get(c_domain).unwrap_or(""))?;
            let pc1 = parse_score(record.get(c_pc1))?;
            let mbfc = parse_score(record.get(c_mbfc))?;
            if pc1.is_none() && mbfc.is_none() {
                return Err("row has no score".to_string());
            }
            Ok(CredibilityLabel { node, pc1, mbfc })
        })();
        match parsed {
            Ok(label) => {
                report.accepted += 1;
                if let Some(&at) = index.get(&label.node) {
                    log::warn!("duplicate label for {} on line {line}; keeping the later row", label.node);
                    report.duplicates.push(label.node.clone());
                    labels[at] = label;
                } else {
                    index.insert(label.node.clone(), labels.len());
                    labels.push(label);
                }
            }
            Err(reason) => report.rejected.push(RejectedRow { line, reason }),
        }
    }
    Ok((labels, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub matched: u64,
    pub unmatched: Vec<NodeKey>,
}

/// Attaches labels to graph nodes by exact key match.
pub fn join_labels(
    dictionary: &NodeDictionary,
    labels: &[CredibilityLabel],
) -> (BTreeMap<NodeId, CredibilityLabel>, MatchReport) {
    let mut joined = BTreeMap::new();
    let mut report = MatchReport::default();
    for label in labels {
        match dictionary.id(&label.node) {
            Some(id) => {
                joined.insert(id, label.clone());
                report.matched += 1;
            }
            None => report.unmatched.push(label.node.clone()),
        }
    }
    (joined, report)
}

pub const SPLIT_FORMAT: &str = "CGSPLIT1";

/// A persisted 60/20/20 split of the nodes carrying a given score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSplit {
    pub target: Target,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<NodeKey>,
    pub val: Vec<NodeKey>,
    pub test: Vec<NodeKey>,
}

impl RegressionSplit {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LabelError> {
        Ok(write_json(path, SPLIT_FORMAT, self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, LabelError> {
        Ok(read_json(path, SPLIT_FORMAT)?)
    }
}

fn stratum_of(score: f64) -> usize {
    ((score * STRATA as f64).floor() as usize).min(STRATA - 1)
}

/// Groups the labelled keys the way the split cuts them: one group per
/// equal-width score decile with at least [`MIN_STRATUM`] members, followed
/// by one pooled group of all members of smaller deciles (if any). Each group
/// is sorted by key.
pub fn effective_strata(labels: &[CredibilityLabel], target: Target) -> Vec<Vec<NodeKey>> {
    let mut deciles: Vec<Vec<NodeKey>> = vec![Vec::new(); STRATA];
    for l in labels {
        if let Some(s) = l.score(target) {
            deciles[stratum_of(s)].push(l.node.clone());
        }
    }
    let mut strata = Vec::new();
    let mut pooled = Vec::new();
    for mut d in deciles {
        d.sort();
        d.dedup();
        if d.len() >= MIN_STRATUM {
            strata.push(d);
        } else {
            pooled.extend(d);
        }
    }
    if !pooled.is_empty() {
        pooled.sort();
        strata.push(pooled);
    }
    strata
}

/// Sizes `(train, val, test)` for a group of `n`: validation and test get
/// `round(0.2 n)` each, training the remainder; groups below
/// [`MIN_STRATUM`] go entirely to training.
pub fn cut_sizes(n: usize) -> (usize, usize, usize) {
    cut_sizes_with(n, SPLIT_RATIOS)
}

/// [`cut_sizes`] for arbitrary `(train, val, test)` ratios.
pub fn cut_sizes_with(n: usize, ratios: [f64; 3]) -> (usize, usize, usize) {
    if n < MIN_STRATUM {
        return (n, 0, 0);
    }
    let val = (ratios[1] * n as f64).round() as usize;
    let test = ((ratios[2] * n as f64).round() as usize).min(n - val);
    (n - val - test, val, test)
}

/// Stratified split over score deciles.
///
/// Each group from [`effective_strata`] is shuffled with
/// [`SplitMix64`]`::new(seed)` (one generator shared across groups, visited
/// in order) using its Fisher-Yates routine, then cut into train, val and
/// test in that order by [`cut_sizes`].
pub fn stratified_split(labels: &[CredibilityLabel], target: Target, seed: u64) -> Result<RegressionSplit, LabelError> {
    stratified_split_with(labels, target, seed, SPLIT_RATIOS)
}

/// [`stratified_split`] with custom `(train, val, test)` ratios.
pub fn stratified_split_with(
    labels: &[CredibilityLabel],
    target: Target,
    seed: u64,
    ratios: [f64; 3],
) -> Result<RegressionSplit, LabelError> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(LabelError::Ratios(ratios));
    }
    let strata = effective_strata(labels, target);
    let found: usize = strata.iter().map(Vec::len).sum();
    if found < MIN_LABELS {
        return Err(LabelError::TooFewLabels { target, needed: MIN_LABELS, found });
    }
    let mut rng = SplitMix64::new(seed);
    let mut split = RegressionSplit {
        target,
        seed,
        ratios,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for mut group in strata {
        rng.shuffle(&mut group);
        let (train, val, _) = cut_sizes_with(group.len(), ratios);
        let mut it = group.into_iter();
        split.train.extend(it.by_ref().take(train));
        split.val.extend(it.by_ref().take(val));
        split.test.extend(it);
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn label(host: &str, pc1: f64) -> CredibilityLabel {
        CredibilityLabel { node: NodeKey::from_host(host).unwrap(), pc1: Some(pc1), mbfc: None }
    }

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_rows() {
        let f = csv_file("domain,pc1,mbfc\nexample.com, 0.90, 0.84\n");
        let (labels, report) = load_dqr(f.path()).unwrap();
        assert_eq!(labels, [CredibilityLabel { node: "com.example".parse().unwrap(), pc1: Some(0.90), mbfc: Some(0.84) }]);
        assert_eq!(report.accepted, 1);
    }

    #[test]
    fn extra_columns_and_schemes() {
        let f = csv_file("Domain,source,PC1,MBFC\nhttps://News.Site.org/,x,0.5,\nb.com,y,,0.25\n");
        let (labels, _) = load_dqr(f.path()).unwrap();
        assert_eq!(labels[0].node.as_str(), "org.site.news");
        assert_eq!(labels[0].mbfc, None);
        assert_eq!(labels[1].pc1, None);
        assert_eq!(labels[1].mbfc, Some(0.25));
    }

    #[test]
    fn out_of_range_rejected() {
        let f = csv_file("domain,pc1,mbfc\na.com,1.3,0.2\nb.com,0.3,0.2\nc.com,,\n");
        let (labels, report) = load_dqr(f.path()).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(report.rejected.len(), 2);
        assert_eq!(report.rejected[0].line, 2);
    }

    #[test]
    fn duplicates_last_wins() {
        let f = csv_file("domain,pc1,mbfc\na.com,0.1,\nb.com,0.2,\na.com,0.3,\n");
        let (labels, report) = load_dqr(f.path()).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0].pc1, Some(0.3));
        assert_eq!(report.duplicates.len(), 1);
    }

    #[test]
    fn missing_column() {
        let f = csv_file("domain,pc1\na.com,0.1\n");
        assert!(matches!(load_dqr(f.path()), Err(LabelError::MissingColumn("mbfc"))));
    }

    #[test]
    fn join() {
        let dict = NodeDictionary::from_keys(["com.a".parse().unwrap(), "com.b".parse().unwrap()]);
        let (m, r) = join_labels(&dict, &[label("a.com", 0.5)]);
        assert_eq!((m.len(), r.unmatched.len()), (1, 0));
        assert!(m.contains_key(&0));
        let dict = NodeDictionary::from_keys(["com.a".parse().unwrap()]);
        let (m, r) = join_labels(&dict, &[label("c.com", 0.5)]);
        assert_eq!((m.len(), r.unmatched.len()), (0, 1));
    }

    #[test]
    fn ten_uniform_labels() {
        let labels: Vec<_> = (0..10).map(|i| label(&format!("s{i}.com"), i as f64 / 10.0 + 0.05)).collect();
        let s = stratified_split(&labels, Target::Pc1, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        assert_eq!(s, stratified_split(&labels, Target::Pc1, 1).unwrap());
    }

    #[test]
    fn too_few() {
        let labels: Vec<_> = (0..9).map(|i| label(&format!("s{i}.com"), 0.5)).collect();
        assert!(matches!(stratified_split(&labels, Target::Pc1, 1), Err(LabelError::TooFewLabels { .. })));
        assert!(stratified_split(&labels, Target::Mbfc, 1).is_err());
    }

    #[test]
    fn cut_sizes_small() {
        assert_eq!(cut_sizes(2), (2, 0, 0));
        assert_eq!(cut_sizes(3), (1, 1, 1));
        assert_eq!(cut_sizes(10), (6, 2, 2));
        assert_eq!(cut_sizes(11), (7, 2, 2));
        assert_eq!(cut_sizes(13), (7, 3, 3));
    }

    #[test]
    fn top_score_lands_in_last_stratum() {
        assert_eq!(stratum_of(1.0), 9);
        assert_eq!(stratum_of(0.0), 0);
        assert_eq!(stratum_of(0.35), 3);
    }
}
