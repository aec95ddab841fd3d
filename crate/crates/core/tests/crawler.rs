mod common;

use std::time::Duration;

use common::{comment_json, cross_reference_json, paginated_org, pull_json, Fault, MockGitHub, MockOrg};
use reviewnet::ingest::{crawl, ApiConfig, CrawlError, EventKind, EventStore};
use reviewnet::model::ReviewId;
use serde_json::json;

fn config(server: &MockGitHub, org: &MockOrg) -> ApiConfig {
    let mut cfg = ApiConfig::new(&server.base_url, &org.token, &org.org);
    cfg.backoff = Duration::from_millis(1);
    cfg
}

fn minimal_org() -> MockOrg {
    let mut org = MockOrg::new("acme");
    org.teams = vec![("web".into(), vec!["acme/site".into()])];
    org.pulls
        .insert("acme/site".into(), vec![pull_json(1, "alice", "2019-02-01T09:00:00Z")]);
    org.files
        .insert(("acme/site".into(), 1), vec![json!({"filename": "app/main.rs"})]);
    org.timelines.insert(
        ("acme/site".into(), 1),
        vec![
            comment_json("bob", "User", "2019-02-01T10:00:00Z"),
            cross_reference_json("dependabot[bot]", "Bot", "2019-02-02T10:00:00Z", "acme/site", 7),
        ],
    );
    org
}

#[test]
fn minimal_organization() {
    let org = minimal_org();
    let server = MockGitHub::start(org.clone());
    let store = crawl(&config(&server, &org)).unwrap();
    assert_eq!(store.pulls.len(), 1);
    assert_eq!(store.events.len(), 2);
    assert_eq!(store.pulls[0].files, vec!["app/main.rs".to_string()]);
}

#[test]
fn bot_reference_is_kept_and_flagged() {
    let org = minimal_org();
    let server = MockGitHub::start(org.clone());
    let store = crawl(&config(&server, &org)).unwrap();
    let reference = store.events.iter().find(|e| e.kind == EventKind::Referenced).unwrap();
    assert!(reference.actor.is_bot);
    assert_eq!(reference.source_review, Some(ReviewId::new("acme/site", 7).unwrap()));
}

#[test]
fn follows_pagination() {
    let org = paginated_org(250);
    let server = MockGitHub::start(org.clone());
    let store = crawl(&config(&server, &org)).unwrap();
    assert_eq!(store.pulls.len(), 250);
    assert_eq!(server.requests_to("/repos/acme/api/pulls"), 3);
    assert_eq!(store.events.len(), org.timeline_items());
}

#[test]
fn rate_limit_is_waited_out() {
    let mut org = paginated_org(120);
    org.faults.push(Fault {
        path: "/repos/acme/api/pulls".into(),
        page: 2,
        status: 403,
        headers: vec![
            ("x-ratelimit-remaining".into(), "0".into()),
            ("Retry-After".into(), "0".into()),
        ],
    });
    let server = MockGitHub::start(org.clone());
    let store = crawl(&config(&server, &org)).unwrap();
    assert_eq!(store.pulls.len(), 120);
    assert_eq!(server.requests_to("/repos/acme/api/pulls"), 3);
}

#[test]
fn transient_server_errors_are_retried() {
    let mut org = minimal_org();
    for _ in 0..2 {
        org.faults.push(Fault {
            path: "/repos/acme/site/issues/1/timeline".into(),
            page: 1,
            status: 502,
            headers: vec![],
        });
    }
    let server = MockGitHub::start(org.clone());
    let store = crawl(&config(&server, &org)).unwrap();
    assert_eq!(store.events.len(), 2);
}

#[test]
fn bad_token_is_a_credential_error() {
    let org = minimal_org();
    let server = MockGitHub::start(org.clone());
    let mut cfg = config(&server, &org);
    cfg.token = "wrong".into();
    assert!(matches!(crawl(&cfg), Err(CrawlError::Credential(_))));
}

#[test]
fn failing_repository_yields_partial_store() {
    let mut org = minimal_org();
    org.teams.push(("data".into(), vec!["acme/etl".into()]));
    org.pulls
        .insert("acme/etl".into(), vec![pull_json(3, "carol", "2019-02-03T09:00:00Z")]);
    for _ in 0..10 {
        org.faults.push(Fault {
            path: "/repos/acme/etl/pulls".into(),
            page: 1,
            status: 500,
            headers: vec![],
        });
    }
    let server = MockGitHub::start(org.clone());
    let mut cfg = config(&server, &org);
    cfg.max_retries = 2;
    match crawl(&cfg) {
        Err(CrawlError::Partial {
            completed,
            failed,
            store,
        }) => {
            assert_eq!(completed, vec!["acme/site".to_string()]);
            assert_eq!(failed.len(), 1);
            assert_eq!(failed[0].0, "acme/etl");
            assert_eq!(store.pulls.len(), 1);
        }
        other => panic!("expected a partial crawl, got {other:?}"),
    }
}

#[test]
fn crawl_dump_round_trips() {
    let org = paginated_org(30);
    let server = MockGitHub::start(org.clone());
    let store = crawl(&config(&server, &org)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    store.write_dump(dir.path()).unwrap();
    let lines = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count();
    assert_eq!(lines("pulls.jsonl"), org.pull_count());
    assert_eq!(lines("events.jsonl"), org.timeline_items());
    assert_eq!(EventStore::load_dump(dir.path()).unwrap(), store);
}

#[test]
fn cli_crawl_writes_dump() {
    let org = paginated_org(12);
    let server = MockGitHub::start(org.clone());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = common::reviewnet(
        &["crawl", "--source", "api", "--org", "acme", "--dump-dir", out],
        &[("GITHUB_TOKEN", &org.token), ("GITHUB_API_URL", &server.base_url)],
    );
    assert!(run.status.success(), "{}", common::stderr(&run));
    assert_eq!(EventStore::load_dump(dir.path()).unwrap().pulls.len(), 12);
}

#[test]
fn cli_crawl_partial_exits_two() {
    let mut org = paginated_org(5);
    org.faults.push(Fault {
        path: "/repos/acme/api/pulls/3/files".into(),
        page: 1,
        status: 404,
        headers: vec![],
    });
    let server = MockGitHub::start(org.clone());
    let dir = tempfile::tempdir().unwrap();
    let run = common::reviewnet(
        &[
            "crawl",
            "--source",
            "api",
            "--org",
            "acme",
            "--dump-dir",
            dir.path().to_str().unwrap(),
        ],
        &[("GITHUB_TOKEN", &org.token), ("GITHUB_API_URL", &server.base_url)],
    );
    assert_eq!(run.status.code(), Some(2), "{}", common::stderr(&run));
    assert!(common::stderr(&run).contains("partial crawl"));
}

#[test]
fn cli_crawl_without_token() {
    let run = common::reviewnet(&["crawl", "--source", "api", "--org", "acme"], &[]);
    assert_eq!(run.status.code(), Some(1));
    assert!(common::stderr(&run).contains("credential error"));
}
