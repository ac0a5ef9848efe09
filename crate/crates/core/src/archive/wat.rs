use serde_json::Value;
use url::Url;

use super::{ArchiveError, RecordType, WarcRecord};

const HTML_METADATA: &str = "/Envelope/Payload-Metadata/HTTP-Response-Metadata/HTML-Metadata";

/// A hyperlink between two absolute URLs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PageLink {
    pub source_url: String,
    pub target_url: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinkOptions {
    /// Also emit image, script, stylesheet, form and `<head>` links, not only
    /// `<a href>` anchors.
    pub include_all_links: bool,
}

/// Pulls the outgoing links out of a WAT metadata record.
///
/// Targets are resolved against the record's target URI. Entries without a
/// usable URL, and targets that do not end up with a scheme and host, are
/// dropped. A payload without the HTML metadata block yields no links.
pub fn extract_wat_links(
    record: &WarcRecord,
    options: LinkOptions,
) -> Result<Vec<PageLink>, ArchiveError> {
    if record.record_type != RecordType::Metadata {
        return Err(ArchiveError::WrongType {
            expected: "metadata",
            found: record.record_type.to_string(),
        });
    }
    let envelope: Value = serde_json::from_slice(&record.payload)?;

    let source = record
        .target_uri
        .as_deref()
        .or_else(|| {
            envelope
                .pointer("/Envelope/WARC-Header-Metadata/WARC-Target-URI")
                .and_then(Value::as_str)
        })
        .and_then(|s| Url::parse(s).ok())
        .filter(|u| u.host().is_some());

    let Some(html) = envelope.pointer(HTML_METADATA) else {
        return Ok(Vec::new());
    };

    let mut entries: Vec<&Value> = Vec::new();
    if let Some(links) = html.get("Links").and_then(Value::as_array) {
        entries.extend(links);
    }
    if options.include_all_links {
        if let Some(head) = html.pointer("/Head/Link").and_then(Value::as_array) {
            entries.extend(head);
        }
    }

    let source_str = source.as_ref().map(Url::as_str);
    let mut out = Vec::new();
    for entry in entries {
        let Some(href) = entry.get("url").and_then(Value::as_str) else {
            continue;
        };
        let path = entry.get("path").and_then(Value::as_str).unwrap_or("");
        if !options.include_all_links && !is_anchor(path) {
            continue;
        }
        let resolved = match &source {
            Some(base) => base.join(href.trim()),
            None => Url::parse(href.trim()),
        };
        let Ok(target) = resolved else { continue };
        if target.host().is_none() {
            continue;
        }
        // Without a resolvable page URL there is no edge source.
        let Some(src) = source_str else { continue };
        out.push(PageLink {
            source_url: src.to_string(),
            target_url: target.into(),
        });
    }
    Ok(out)
}

fn is_anchor(path: &str) -> bool {
    path.split('@').next().is_some_and(|tag| tag.eq_ignore_ascii_case("A"))
}
