//! Streaming reader for WARC-family archives (WARC, WAT, WET).
//!
//! Archives are either plain WARC or a concatenation of gzip members, one
//! record per member. Members are decoded one at a time, so memory stays
//! bounded by the largest record. A corrupt member is reported once with its
//! byte offset and the reader resynchronises on the next gzip magic.

mod wat;
mod wet;

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Cursor, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use flate2::bufread::GzDecoder;

pub use wat::{extract_wat_links, LinkOptions, PageLink};
pub use wet::{extract_wet_document, WetDocument};

const GZIP_MAGIC: [u8; 3] = [0x1f, 0x8b, 0x08];

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("cannot open archive {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad record at byte offset {offset}: {message}")]
    Record { offset: u64, message: String },
    #[error("expected a {expected} record, found {found}")]
    WrongType { expected: &'static str, found: String },
    #[error("record payload is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record is missing required header {0}")]
    MissingHeader(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RecordType {
    Warcinfo,
    Response,
    Metadata,
    Conversion,
    Other(String),
}

impl RecordType {
    fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "warcinfo" => Self::Warcinfo,
            "response" => Self::Response,
            "metadata" => Self::Metadata,
            "conversion" => Self::Conversion,
            _ => Self::Other(s.trim().to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Self::Warcinfo => "warcinfo",
            Self::Response => "response",
            Self::Metadata => "metadata",
            Self::Conversion => "conversion",
            Self::Other(s) => s,
        }
    }
}

impl fmt::Display for RecordType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One archive record. `headers` keeps the on-disk order and spelling.
#[derive(Debug, Clone, PartialEq)]
pub struct WarcRecord {
    pub record_type: RecordType,
    pub target_uri: Option<String>,
    pub date: DateTime<Utc>,
    pub content_length: u64,
    pub headers: Vec<(String, String)>,
    pub payload: Vec<u8>,
}

impl WarcRecord {
    /// Assembles a record and its header block from parts.
    pub fn new(
        record_type: RecordType,
        target_uri: Option<&str>,
        date: DateTime<Utc>,
        extra_headers: &[(&str, &str)],
        payload: Vec<u8>,
    ) -> Self {
        let mut headers = vec![
            ("WARC-Type".to_string(), record_type.as_str().to_string()),
            ("WARC-Date".to_string(), date.format("%Y-%m-%dT%H:%M:%SZ").to_string()),
        ];
        if let Some(uri) = target_uri {
            headers.push(("WARC-Target-URI".to_string(), uri.to_string()));
        }
        headers.extend(extra_headers.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        headers.push(("Content-Length".to_string(), payload.len().to_string()));
        WarcRecord {
            record_type,
            target_uri: target_uri.map(str::to_string),
            date,
            content_length: payload.len() as u64,
            headers,
            payload,
        }
    }

    /// Case-insensitive header lookup (first occurrence).
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Reads a single record from `reader`. Returns `Ok(None)` at a clean end of
/// input. Blank lines before the version line are skipped, which absorbs the
/// CRLF CRLF record separator.
pub(crate) fn read_record<R: BufRead>(reader: &mut R) -> Result<Option<WarcRecord>, String> {
    let mut line = String::new();
    loop {
        line.clear();
        let n = read_line_lossy(reader, &mut line)?;
        if n == 0 {
            return Ok(None);
        }
        if !line.trim().is_empty() {
            break;
        }
    }
    if !line.starts_with("WARC/") {
        return Err(format!("expected WARC version line, found {:?}", truncate(&line, 40)));
    }

    let mut headers: Vec<(String, String)> = Vec::new();
    loop {
        line.clear();
        if read_line_lossy(reader, &mut line)? == 0 {
            return Err("unexpected end of input in header block".into());
        }
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() {
            break;
        }
        if trimmed.starts_with([' ', '\t']) {
            match headers.last_mut() {
                Some((_, v)) => {
                    v.push(' ');
                    v.push_str(trimmed.trim());
                }
                None => return Err("continuation line before first header".into()),
            }
            continue;
        }
        let (name, value) = trimmed
            .split_once(':')
            .ok_or_else(|| format!("malformed header line {:?}", truncate(trimmed, 40)))?;
        headers.push((name.trim().to_string(), value.trim().to_string()));
    }

    let find = |name: &str| {
        headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    };
    let content_length: u64 = find("Content-Length")
        .ok_or("missing Content-Length")?
        .parse()
        .map_err(|_| "unparseable Content-Length".to_string())?;
    let record_type = RecordType::parse(find("WARC-Type").ok_or("missing WARC-Type")?);
    let date = find("WARC-Date").ok_or("missing WARC-Date")?;
    let date = DateTime::parse_from_rfc3339(date)
        .map_err(|e| format!("bad WARC-Date {date:?}: {e}"))?
        .with_timezone(&Utc);
    let target_uri = find("WARC-Target-URI").map(|s| s.trim_matches(['<', '>']).to_string());

    let mut payload = Vec::new();
    reader
        .take(content_length)
        .read_to_end(&mut payload)
        .map_err(|e| e.to_string())?;
    if payload.len() as u64 != content_length {
        return Err(format!(
            "truncated payload: expected {content_length} bytes, got {}",
            payload.len()
        ));
    }

    Ok(Some(WarcRecord {
        record_type,
        target_uri,
        date,
        content_length,
        headers,
        payload,
    }))
}

fn read_line_lossy<R: BufRead>(reader: &mut R, out: &mut String) -> Result<usize, String> {
    let mut raw = Vec::new();
    let n = reader.read_until(b'\n', &mut raw).map_err(|e| e.to_string())?;
    out.push_str(&String::from_utf8_lossy(&raw));
    Ok(n)
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Framing {
    Gzip,
    Plain,
}

/// Iterator over the records of one archive.
///
/// Yields `Err(ArchiveError::Record { .. })` for a damaged member and keeps
/// going with the next one. Any other error ends the iteration.
pub struct ArchiveReader<R> {
    inner: R,
    framing: Framing,
    pending: VecDeque<WarcRecord>,
    resync_from: Option<u64>,
    finished: bool,
}

/// Opens an archive file, detecting gzip-member framing from its magic bytes.
pub fn open_archive(path: impl AsRef<Path>) -> Result<ArchiveReader<BufReader<File>>, ArchiveError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ArchiveError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    ArchiveReader::new(BufReader::with_capacity(64 * 1024, file))
}

impl<R: BufRead + Seek> ArchiveReader<R> {
    pub fn new(mut inner: R) -> Result<Self, ArchiveError> {
        let start = inner.stream_position()?;
        let head = peek(&mut inner, 2)?;
        inner.seek(SeekFrom::Start(start))?;
        let framing = if head.as_slice() == &GZIP_MAGIC[..2] {
            Framing::Gzip
        } else {
            Framing::Plain
        };
        Ok(Self {
            inner,
            framing,
            pending: VecDeque::new(),
            resync_from: None,
            finished: false,
        })
    }

    pub fn is_gzip(&self) -> bool {
        self.framing == Framing::Gzip
    }

    fn next_plain(&mut self) -> Option<Result<WarcRecord, ArchiveError>> {
        let offset = match self.inner.stream_position() {
            Ok(o) => o,
            Err(e) => return self.fail(e.into()),
        };
        match read_record(&mut self.inner) {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => {
                self.finished = true;
                None
            }
            // Plain framing has no member boundaries to resynchronise on.
            Err(message) => self.fail(ArchiveError::Record { offset, message }),
        }
    }

    fn next_gzip(&mut self) -> Option<Result<WarcRecord, ArchiveError>> {
        loop {
            if let Some(rec) = self.pending.pop_front() {
                return Some(Ok(rec));
            }
            // After a damaged member, skip forward to the next decodable one
            // without reporting the same damage twice.
            let mut quiet = false;
            if let Some(from) = self.resync_from.take() {
                match self.seek_magic(from) {
                    Ok(true) => quiet = true,
                    Ok(false) => {
                        self.finished = true;
                        return None;
                    }
                    Err(e) => return self.fail(e.into()),
                }
            }
            let start = match self.inner.stream_position() {
                Ok(s) => s,
                Err(e) => return self.fail(e.into()),
            };
            let head = match peek(&mut self.inner, 3) {
                Ok(h) => h,
                Err(e) => return self.fail(e.into()),
            };
            if head.is_empty() {
                self.finished = true;
                return None;
            }
            if let Err(e) = self.inner.seek(SeekFrom::Start(start)) {
                return self.fail(e.into());
            }
            if head != GZIP_MAGIC {
                self.resync_from = Some(start + 1);
                if quiet {
                    continue;
                }
                return Some(Err(ArchiveError::Record {
                    offset: start,
                    message: "missing gzip member header".into(),
                }));
            }

            let mut member = Vec::new();
            let decoded = GzDecoder::new(&mut self.inner).read_to_end(&mut member);
            if let Err(e) = decoded {
                self.resync_from = Some(start + 1);
                if quiet {
                    continue;
                }
                return Some(Err(ArchiveError::Record {
                    offset: start,
                    message: format!("corrupt gzip member: {e}"),
                }));
            }

            let mut cursor = Cursor::new(member);
            loop {
                match read_record(&mut cursor) {
                    Ok(Some(rec)) => self.pending.push_back(rec),
                    Ok(None) => break,
                    Err(message) => {
                        self.pending.clear();
                        return Some(Err(ArchiveError::Record { offset: start, message }));
                    }
                }
            }
        }
    }

    /// Positions the reader at the next gzip magic at or after `from`.
    fn seek_magic(&mut self, from: u64) -> io::Result<bool> {
        self.inner.seek(SeekFrom::Start(from))?;
        let mut pos = from;
        let mut matched = 0usize;
        loop {
            let buf = self.inner.fill_buf()?;
            if buf.is_empty() {
                return Ok(false);
            }
            let len = buf.len();
            for (i, &b) in buf.iter().enumerate() {
                matched = if b == GZIP_MAGIC[matched] {
                    matched + 1
                } else if b == GZIP_MAGIC[0] {
                    1
                } else {
                    0
                };
                if matched == GZIP_MAGIC.len() {
                    let found = pos + i as u64 + 1 - GZIP_MAGIC.len() as u64;
                    self.inner.seek(SeekFrom::Start(found))?;
                    return Ok(true);
                }
            }
            self.inner.consume(len);
            pos += len as u64;
        }
    }

    fn fail(&mut self, err: ArchiveError) -> Option<Result<WarcRecord, ArchiveError>> {
        self.finished = true;
        Some(Err(err))
    }
}

impl<R: BufRead + Seek> Iterator for ArchiveReader<R> {
    type Item = Result<WarcRecord, ArchiveError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.framing {
            Framing::Gzip => self.next_gzip(),
            Framing::Plain => self.next_plain(),
        }
    }
}

/// Reads up to `n` bytes without caring about the final position.
fn peek<R: Read>(reader: &mut R, n: usize) -> io::Result<Vec<u8>> {
    let mut out = Vec::with_capacity(n);
    reader.take(n as u64).read_to_end(&mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::warc::{write_gzip_record, write_plain_record};
    use chrono::TimeZone;

    fn sample(i: usize) -> WarcRecord {
        WarcRecord::new(
            RecordType::Conversion,
            Some(&format!("https://site{i}.example.org/page")),
            Utc.with_ymd_and_hms(2024, 12, 2, 10, 0, i as u32).unwrap(),
            &[("WARC-Identified-Content-Language", "eng")],
            format!("document number {i}").into_bytes(),
        )
    }

    fn gzip_archive(records: &[WarcRecord]) -> (Vec<u8>, Vec<usize>) {
        let mut out = Vec::new();
        let mut starts = Vec::new();
        for r in records {
            starts.push(out.len());
            write_gzip_record(&mut out, r).unwrap();
        }
        (out, starts)
    }

    fn read_all(bytes: Vec<u8>) -> (Vec<WarcRecord>, Vec<ArchiveError>) {
        let reader = ArchiveReader::new(Cursor::new(bytes)).unwrap();
        let mut ok = Vec::new();
        let mut errs = Vec::new();
        for item in reader {
            match item {
                Ok(r) => ok.push(r),
                Err(e) => errs.push(e),
            }
        }
        (ok, errs)
    }

    #[test]
    fn empty_input_yields_nothing() {
        let (ok, errs) = read_all(Vec::new());
        assert!(ok.is_empty() && errs.is_empty());
    }

    #[test]
    fn plain_and_gzip_agree() {
        let records: Vec<_> = (0..5).map(sample).collect();
        let mut plain = Vec::new();
        for r in &records {
            write_plain_record(&mut plain, r).unwrap();
        }
        let (from_plain, e1) = read_all(plain);
        let (from_gzip, e2) = read_all(gzip_archive(&records).0);
        assert!(e1.is_empty() && e2.is_empty());
        assert_eq!(from_plain, records);
        assert_eq!(from_gzip, records);
    }

    #[test]
    fn corrupt_member_is_skipped_once() {
        let records: Vec<_> = (0..3).map(sample).collect();
        let (mut bytes, starts) = gzip_archive(&records);
        // Damage the deflate body of the middle member.
        for b in &mut bytes[starts[1] + 12..starts[1] + 20] {
            *b ^= 0xA5;
        }
        let (ok, errs) = read_all(bytes);
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[0], records[0]);
        assert_eq!(ok[1], records[2]);
        assert_eq!(errs.len(), 1);
        match &errs[0] {
            ArchiveError::Record { offset, .. } => assert_eq!(*offset, starts[1] as u64),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn damaged_member_header_is_skipped_once() {
        let records: Vec<_> = (0..3).map(sample).collect();
        let (mut bytes, starts) = gzip_archive(&records);
        bytes[starts[1]] = 0;
        let (ok, errs) = read_all(bytes);
        assert_eq!(ok.len(), 2);
        assert_eq!(errs.len(), 1);
    }

    #[test]
    fn header_lookup_is_case_insensitive() {
        let r = sample(1);
        assert_eq!(r.header("warc-identified-content-language"), Some("eng"));
        assert_eq!(r.header("CONTENT-LENGTH"), Some(r.payload.len().to_string().as_str()));
    }

    #[test]
    fn missing_content_length_is_a_record_error() {
        let text = b"WARC/1.0\r\nWARC-Type: metadata\r\nWARC-Date: 2024-12-02T00:00:00Z\r\n\r\nabc\r\n\r\n";
        let (ok, errs) = read_all(text.to_vec());
        assert!(ok.is_empty());
        assert_eq!(errs.len(), 1);
    }

    #[test]
    fn other_record_types_survive() {
        let r = WarcRecord::new(
            RecordType::Other("request".into()),
            None,
            Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            &[],
            b"x".to_vec(),
        );
        let (ok, _) = read_all(gzip_archive(std::slice::from_ref(&r)).0);
        assert_eq!(ok[0].record_type, RecordType::Other("request".into()));
    }

    #[test]
    fn open_missing_file() {
        assert!(matches!(
            open_archive("/definitely/not/here.warc.gz"),
            Err(ArchiveError::Open { .. })
        ));
    }
}
