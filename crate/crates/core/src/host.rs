//! Canonical domain keys.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use url::{Host, Url};

/// Why a URL or host could not become a graph node.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HostReject {
    #[error("not an absolute URL: {0}")]
    Unparseable(String),
    #[error("URL has no host")]
    NoHost,
    #[error("IP-literal host")]
    IpLiteral,
    #[error("single-label host `{0}`")]
    SingleLabel(String),
    #[error("malformed host `{0}`")]
    Malformed(String),
}

/// A web host in reversed-label notation, e.g. `com.example.news` for
/// `news.example.com`.
///
/// Keys are lowercase, carry at least two labels and never contain a
/// scheme, port, path or trailing dot. A subdomain and its parent are
/// different keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NodeKey(String);

impl NodeKey {
    /// Builds a key from a forward host name (`news.example.com`).
    pub fn from_host(host: &str) -> Result<Self, HostReject> {
        let host = host.strip_suffix('.').unwrap_or(host).to_ascii_lowercase();
        if host.is_empty() {
            return Err(HostReject::NoHost);
        }
        if host.parse::<std::net::IpAddr>().is_ok() || host.starts_with('[') {
            return Err(HostReject::IpLiteral);
        }
        let labels: Vec<&str> = host.split('.').collect();
        if labels.len() < 2 {
            return Err(HostReject::SingleLabel(host));
        }
        if labels.iter().any(|l| !valid_label(l)) {
            return Err(HostReject::Malformed(host));
        }
        Ok(NodeKey(labels.into_iter().rev().collect::<Vec<_>>().join(".")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Forward host name (`news.example.com`).
    pub fn host(&self) -> String {
        self.0.split('.').rev().collect::<Vec<_>>().join(".")
    }
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Extracts the host of an absolute URL and turns it into a [`NodeKey`].
///
/// No `www` stripping and no registrable-domain collapsing is performed.
pub fn normalize_host(url: &str) -> Result<NodeKey, HostReject> {
    let parsed = Url::parse(url).map_err(|_| HostReject::Unparseable(url.to_string()))?;
    match parsed.host() {
        None => Err(HostReject::NoHost),
        Some(Host::Ipv4(_)) | Some(Host::Ipv6(_)) => Err(HostReject::IpLiteral),
        Some(Host::Domain(d)) => NodeKey::from_host(d),
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for NodeKey {
    type Err = HostReject;

    /// Parses a key that is already in reversed notation.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let forward: Vec<&str> = s.split('.').rev().collect();
        let key = NodeKey::from_host(&forward.join("."))?;
        if key.0 != s {
            return Err(HostReject::Malformed(s.to_string()));
        }
        Ok(key)
    }
}

impl TryFrom<String> for NodeKey {
    type Error = HostReject;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<NodeKey> for String {
    fn from(k: NodeKey) -> String {
        k.0
    }
}
