use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ArchiveError, RecordType, WarcRecord};

/// Extracted plain text of one crawled page.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WetDocument {
    pub url: String,
    pub fetch_time: DateTime<Utc>,
    pub languages: Vec<String>,
    pub text: String,
    /// Number of unicode scalar values in `text`.
    pub text_length: usize,
}

impl WetDocument {
    pub fn new(url: impl Into<String>, fetch_time: DateTime<Utc>, text: impl Into<String>) -> Self {
        let text = text.into();
        WetDocument {
            url: url.into(),
            fetch_time,
            languages: Vec::new(),
            text_length: text.chars().count(),
            text,
        }
    }
}

/// Maps a WET conversion record onto a [`WetDocument`]. Invalid UTF-8 in the
/// payload is replaced, not rejected.
pub fn extract_wet_document(record: &WarcRecord) -> Result<WetDocument, ArchiveError> {
    if record.record_type != RecordType::Conversion {
        return Err(ArchiveError::WrongType {
            expected: "conversion",
            found: record.record_type.to_string(),
        });
    }
    let url = record
        .target_uri
        .clone()
        .filter(|u| !u.is_empty())
        .ok_or(ArchiveError::MissingHeader("WARC-Target-URI"))?;
    let languages = record
        .header("WARC-Identified-Content-Language")
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let text = String::from_utf8_lossy(&record.payload).into_owned();
    Ok(WetDocument {
        url,
        fetch_time: record.date,
        languages,
        text_length: text.chars().count(),
        text,
    })
}
