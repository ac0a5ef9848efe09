use std::io::Cursor;

use credigraph_core::archive::{
    extract_wat_links, extract_wet_document, open_archive, ArchiveError, ArchiveReader, LinkOptions, RecordType,
    WarcRecord,
};
use credigraph_core::fixtures::warc::write_gzip_record;
use credigraph_core::fixtures::{generate_crawl, CrawlFixtureConfig};

fn corpus() -> credigraph_core::fixtures::CrawlFixture {
    generate_crawl(CrawlFixtureConfig { domains: 400, links: 6000, records_per_file: 150, seed: 11, ..Default::default() })
}

fn read_file(path: &std::path::Path) -> Vec<WarcRecord> {
    open_archive(path).unwrap().collect::<Result<Vec<_>, _>>().unwrap()
}

#[test]
fn written_corpus_parses_back_exactly() {
    let fixture = corpus();
    let dir = tempfile::tempdir().unwrap();
    let truth = fixture.write(dir.path()).unwrap();
    let expected: Vec<_> = fixture.wat_files().into_iter().chain(fixture.wet_files()).collect();
    let written: Vec<_> = truth.wat_files.iter().chain(&truth.wet_files).collect();
    assert_eq!(expected.len(), written.len());
    let mut total = 0;
    for ((_, records), file) in expected.iter().zip(written) {
        let parsed = read_file(&file.path);
        assert_eq!(parsed.len(), records.len(), "{}", file.path.display());
        for (p, e) in parsed.iter().zip(records) {
            assert_eq!(p.record_type, e.record_type);
            assert_eq!(p.target_uri, e.target_uri);
            assert_eq!(p.payload, e.payload);
            assert_eq!(p.content_length, p.payload.len() as u64);
            assert_eq!(p.date, e.date);
        }
        total += parsed.len();
    }
    assert!(total >= 1000, "corpus has only {total} records");
}

#[test]
fn link_counts_match_generator() {
    let fixture = corpus();
    let mut anchors = 0u64;
    let mut all = 0u64;
    for (_, records) in fixture.wat_files() {
        for r in records.iter().filter(|r| r.record_type == RecordType::Metadata) {
            anchors += extract_wat_links(r, LinkOptions::default()).unwrap().len() as u64;
            all += extract_wat_links(r, LinkOptions { include_all_links: true }).unwrap().len() as u64;
        }
    }
    assert_eq!(anchors, fixture.extracted_anchor_links);
    assert_eq!(all, fixture.extracted_anchor_links + fixture.non_anchor_links);
}

#[test]
fn wet_documents_carry_generator_urls() {
    let fixture = corpus();
    let mut urls = Vec::new();
    for (_, records) in fixture.wet_files() {
        for r in records.iter().filter(|r| r.record_type == RecordType::Conversion) {
            let doc = extract_wet_document(r).unwrap();
            assert_eq!(doc.text_length, doc.text.chars().count());
            urls.push(doc.url);
        }
    }
    let expected: Vec<_> = fixture.pages.iter().filter(|p| p.text.is_some()).map(|p| p.url.clone()).collect();
    assert_eq!(urls, expected);
}

#[test]
fn corrupt_member_is_skipped_once() {
    let fixture = corpus();
    let records: Vec<WarcRecord> = fixture.wat_files()[0].1[1..4].to_vec();
    let mut bytes = Vec::new();
    let mut starts = Vec::new();
    for r in &records {
        starts.push(bytes.len());
        write_gzip_record(&mut bytes, r).unwrap();
    }
    // Damage the deflate stream of the middle member.
    for b in &mut bytes[starts[1] + 20..starts[1] + 40] {
        *b ^= 0x5a;
    }
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for item in ArchiveReader::new(Cursor::new(bytes)).unwrap() {
        match item {
            Ok(r) => ok.push(r),
            Err(e) => errors.push(e),
        }
    }
    assert_eq!(ok.len(), 2);
    assert_eq!(ok[0].target_uri, records[0].target_uri);
    assert_eq!(ok[1].target_uri, records[2].target_uri);
    assert_eq!(errors.len(), 1);
    match &errors[0] {
        ArchiveError::Record { offset, .. } => assert_eq!(*offset, starts[1] as u64),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn missing_file_is_an_open_error() {
    assert!(matches!(open_archive("/nonexistent/x.warc.gz"), Err(ArchiveError::Open { .. })));
}
