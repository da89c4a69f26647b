use std::time::{Duration, Instant};

use proptest::prelude::*;
use serde_json::json;
use silico_core::corpus::{
    crawl_all, crawl_to_file, fetch_page, incomplete_path, load_snapshot, save_snapshot, ClientConfig,
    PageCursor, ReadOnlyClient, RetryPolicy, SubmoltRecord,
};
use silico_core::fixture::{generate_corpus, serve, serve_raw, CorpusSpec, FixtureServer, ServeOptions};

fn records(n: usize) -> Vec<SubmoltRecord> {
    let spec = CorpusSpec::themed(3, 1, n);
    generate_corpus(&spec).unwrap().0
}

fn config(server: &FixtureServer, page_size: usize) -> ClientConfig {
    ClientConfig {
        base_url: server.base_url(),
        page_size,
        rate_limit: 0.0,
        retry: RetryPolicy {
            max_retries: 2,
            base_delay: Duration::from_millis(5),
            max_delay: Duration::from_millis(20),
        },
        ..ClientConfig::default()
    }
}

fn listing_calls(server: &FixtureServer) -> usize {
    server.request_log().iter().filter(|e| e.url.starts_with("/api/v1/submolts")).count()
}

#[test]
fn twenty_five_records_in_pages_of_ten() {
    let corpus = records(25);
    let server = serve(&corpus, ServeOptions::default()).unwrap();
    let client = ReadOnlyClient::new(config(&server, 10)).unwrap();
    let mut sizes = Vec::new();
    let mut cursor: Option<PageCursor> = None;
    loop {
        let page = fetch_page(&client, cursor.as_ref()).unwrap();
        sizes.push(page.records.len());
        match page.next {
            Some(next) => cursor = Some(next),
            None => break,
        }
        assert!(sizes.len() < 10, "pagination did not terminate");
    }
    assert_eq!(sizes, vec![10, 10, 5]);
    assert_eq!(listing_calls(&server), 3);
}

#[test]
fn empty_platform_yields_empty_page_and_no_cursor() {
    let server = serve(&[], ServeOptions::default()).unwrap();
    let client = ReadOnlyClient::new(config(&server, 10)).unwrap();
    let page = fetch_page(&client, None).unwrap();
    assert!(page.records.is_empty());
    assert!(page.next.is_none());
}

#[test]
fn beyond_last_page_is_empty() {
    let server = serve(&records(5), ServeOptions::default()).unwrap();
    let client = ReadOnlyClient::new(config(&server, 10)).unwrap();
    let page = fetch_page(&client, Some(&PageCursor::Page(4))).unwrap();
    assert!(page.records.is_empty());
    assert!(page.next.is_none());
}

#[test]
fn planted_corpus_is_crawled_completely() {
    let spec = CorpusSpec::themed(17, 8, 520);
    let (corpus, manifest) = generate_corpus(&spec).unwrap();
    assert_eq!(corpus.len(), 4160);
    let mut corpus = corpus;
    corpus.extend(records(2).into_iter().enumerate().map(|(i, mut r)| {
        r.id = format!("extra{i}");
        r
    }));
    let server = serve(&corpus, ServeOptions::default()).unwrap();
    let snap = crawl_all(&config(&server, 100)).unwrap();
    assert_eq!(snap.records.len(), 4162);
    assert_eq!(snap.pages_fetched, 42);
    assert_eq!(listing_calls(&server), 42);
    let ids: Vec<&str> = snap.records.iter().map(|r| r.id.as_str()).collect();
    let want: Vec<&str> = corpus.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, want, "server order preserved");
    assert!(manifest.entries.iter().all(|e| ids.contains(&e.id.as_str())));
    assert!(server.request_log().iter().all(|e| e.method == "GET"));
}

#[test]
fn duplicate_id_across_pages_is_collapsed() {
    let mut corpus = records(12);
    let mut dup = corpus[1].clone();
    dup.description = "a later copy".into();
    corpus[11] = dup;
    let server = serve(&corpus, ServeOptions::default()).unwrap();
    let snap = crawl_all(&config(&server, 10)).unwrap();
    assert_eq!(snap.records.len(), 11);
    assert_eq!(snap.collisions, 1);
    let kept = snap.records.iter().find(|r| r.id == corpus[1].id).unwrap();
    assert_ne!(kept.description, "a later copy");
}

#[test]
fn interrupted_crawl_writes_incomplete_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snapshot.jsonl");
    let corpus = records(25);

    let good = serve(&corpus, ServeOptions::default()).unwrap();
    let complete = crawl_to_file(&config(&good, 10), &path).unwrap();
    let before = std::fs::read(&path).unwrap();

    let opts = ServeOptions { fail_from_offset: Some(20), ..ServeOptions::default() };
    let failing = serve(&corpus, opts).unwrap();
    assert!(crawl_to_file(&config(&failing, 10), &path).is_err());
    assert_eq!(std::fs::read(&path).unwrap(), before, "complete snapshot untouched");
    let partial = load_snapshot(&incomplete_path(&path)).unwrap();
    assert_eq!(partial.pages_fetched, 2);
    assert_eq!(partial.records.len(), 20);
    assert_eq!(complete.records.len(), 25);
}

#[test]
fn throttled_requests_are_retried() {
    let corpus = records(15);
    let opts = ServeOptions { throttle_first: 2, ..ServeOptions::default() };
    let server = serve(&corpus, opts).unwrap();
    let started = Instant::now();
    let snap = crawl_all(&config(&server, 10)).unwrap();
    assert_eq!(snap.records.len(), 15);
    // two 429 answers plus two successful pages
    assert_eq!(listing_calls(&server), 4);
    assert!(started.elapsed() < Duration::from_secs(10));
}

#[test]
fn client_failure_is_not_retried() {
    let server = serve(&records(3), ServeOptions::default()).unwrap();
    let mut cfg = config(&server, 10);
    cfg.path = "/api/v1/nowhere".into();
    assert!(crawl_all(&cfg).is_err());
    assert_eq!(server.request_log().len(), 1);
}

#[test]
fn malformed_records_are_skipped_and_counted() {
    let items = vec![
        json!({"id": "a1", "name": "alpha", "description": "first"}),
        json!({"name": "no id"}),
        json!("not an object"),
        json!({"id": 7, "name": "seven", "description": null, "owner": {"x": 1}}),
    ];
    let server = serve_raw(items, ServeOptions::default()).unwrap();
    let snap = crawl_all(&config(&server, 10)).unwrap();
    assert_eq!(snap.malformed, 2);
    assert_eq!(snap.records.len(), 2);
    assert_eq!(snap.records[1].id, "7");
    assert_eq!(snap.records[1].description, "");
    assert!(snap.records[1].extra.contains_key("owner"));
}

#[test]
fn cursor_pagination_scheme() {
    let server = serve(&records(23), ServeOptions::default()).unwrap();
    let mut cfg = config(&server, 10);
    cfg.pagination = "cursor".into();
    let snap = crawl_all(&cfg).unwrap();
    assert_eq!(snap.records.len(), 23);
    assert_eq!(snap.pages_fetched, 3);
}

#[test]
fn crawled_snapshot_roundtrips_through_disk() {
    let server = serve(&records(30), ServeOptions::default()).unwrap();
    let snap = crawl_all(&config(&server, 7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    save_snapshot(&snap, &path).unwrap();
    assert_eq!(load_snapshot(&path).unwrap(), snap);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pagination_is_complete_and_disjoint(n in 1usize..60, page in 1usize..15) {
        let corpus = records(n);
        let server = serve(&corpus, ServeOptions::default()).unwrap();
        let snap = crawl_all(&config(&server, page)).unwrap();
        prop_assert_eq!(snap.records.len(), n);
        prop_assert_eq!(snap.collisions, 0);
        prop_assert_eq!(listing_calls(&server), n.div_ceil(page));
        prop_assert!(server.request_log().iter().all(|e| e.method == "GET"));
    }
}
