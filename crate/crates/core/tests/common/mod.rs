#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use reviewnet::catalog::{ComponentGraph, ComponentSnapshot, SnapshotEntry, UNOWNED_COMPONENT};
use reviewnet::ingest::{Actor, EventKind, EventStore, PullRecord, ReviewEvent};
use reviewnet::model::ReviewId;
use reviewnet::similarity::CostModel;

// ---------------------------------------------------------------------------
// Mock GitHub REST server

/// A one-shot canned response for a path/page combination.
#[derive(Debug, Clone)]
pub struct Fault {
    pub path: String,
    pub page: usize,
    pub status: u16,
    pub headers: Vec<(String, String)>,
}

#[derive(Debug, Clone, Default)]
pub struct MockOrg {
    pub token: String,
    pub org: String,
    pub teams: Vec<(String, Vec<String>)>,
    pub pulls: BTreeMap<String, Vec<Value>>,
    pub files: BTreeMap<(String, u64), Vec<Value>>,
    pub timelines: BTreeMap<(String, u64), Vec<Value>>,
    pub faults: Vec<Fault>,
}

impl MockOrg {
    pub fn new(org: &str) -> Self {
        MockOrg {
            token: "test-token".into(),
            org: org.into(),
            ..Default::default()
        }
    }

    /// Exposed timeline items, summed over all pulls.
    pub fn timeline_items(&self) -> usize {
        self.timelines.values().map(Vec::len).sum()
    }

    pub fn pull_count(&self) -> usize {
        self.pulls.values().map(Vec::len).sum()
    }

    fn collection(&self, path: &str) -> Option<Vec<Value>> {
        let parts: Vec<&str> = path.trim_start_matches('/').split('/').collect();
        match parts.as_slice() {
            ["orgs", org, "teams"] if *org == self.org => {
                Some(self.teams.iter().map(|(slug, _)| json!({ "slug": slug })).collect())
            }
            ["orgs", org, "teams", slug, "repos"] if *org == self.org => self
                .teams
                .iter()
                .find(|(s, _)| s == slug)
                .map(|(_, repos)| repos.iter().map(|r| json!({ "full_name": r })).collect()),
            ["repos", owner, name, "pulls"] => self.pulls.get(&format!("{owner}/{name}")).cloned(),
            ["repos", owner, name, "pulls", n, "files"] => {
                let n: u64 = n.parse().ok()?;
                Some(
                    self.files
                        .get(&(format!("{owner}/{name}"), n))
                        .cloned()
                        .unwrap_or_default(),
                )
            }
            ["repos", owner, name, "issues", n, "timeline"] => {
                let n: u64 = n.parse().ok()?;
                Some(
                    self.timelines
                        .get(&(format!("{owner}/{name}"), n))
                        .cloned()
                        .unwrap_or_default(),
                )
            }
            _ => None,
        }
    }
}

pub struct MockGitHub {
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
    pub base_url: String,
    log: Arc<Mutex<Vec<String>>>,
}

fn query_param(query: &str, key: &str) -> Option<usize> {
    query.split('&').find_map(|kv| {
        let (k, v) = kv.split_once('=')?;
        (k == key).then(|| v.parse().ok()).flatten()
    })
}

impl MockGitHub {
    pub fn start(org: MockOrg) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let base_url = format!("http://127.0.0.1:{port}");
        let log = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let server = Arc::clone(&server);
            let log = Arc::clone(&log);
            let base = base_url.clone();
            std::thread::spawn(move || {
                let mut org = org;
                for request in server.incoming_requests() {
                    let url = request.url().to_string();
                    log.lock().unwrap().push(url.clone());
                    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
                    let page = query_param(query, "page").unwrap_or(1);
                    let per_page = query_param(query, "per_page").unwrap_or(30);
                    let authorized = request
                        .headers()
                        .iter()
                        .any(|h| h.field.equiv("Authorization") && h.value.as_str() == format!("Bearer {}", org.token));
                    let response = if !authorized {
                        json_response(401, &json!({"message": "Bad credentials"}), vec![])
                    } else if let Some(i) = org.faults.iter().position(|f| f.path == path && f.page == page) {
                        let fault = org.faults.remove(i);
                        json_response(fault.status, &json!({"message": "simulated"}), fault.headers)
                    } else if let Some(items) = org.collection(path) {
                        let start = (page - 1) * per_page;
                        let chunk: Vec<Value> = items.iter().skip(start).take(per_page).cloned().collect();
                        let mut headers = vec![];
                        if items.len() > page * per_page {
                            let next = format!("{base}{path}?per_page={per_page}&page={}", page + 1);
                            headers.push(("Link".to_string(), format!("<{next}>; rel=\"next\"")));
                        }
                        json_response(200, &Value::Array(chunk), headers)
                    } else {
                        json_response(404, &json!({"message": "Not Found"}), vec![])
                    };
                    let _ = request.respond(response);
                }
            })
        };
        MockGitHub {
            server,
            handle: Some(handle),
            base_url,
            log,
        }
    }

    pub fn requests(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    pub fn requests_to(&self, path: &str) -> usize {
        self.requests()
            .iter()
            .filter(|u| u.split('?').next() == Some(path))
            .count()
    }
}

impl Drop for MockGitHub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_response(
    status: u16,
    body: &Value,
    headers: Vec<(String, String)>,
) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let mut resp = tiny_http::Response::from_string(body.to_string()).with_status_code(status);
    resp.add_header(tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap());
    for (k, v) in headers {
        resp.add_header(tiny_http::Header::from_bytes(k.as_bytes(), v.as_bytes()).unwrap());
    }
    resp
}

pub fn api_time(day: u32, hour: u32) -> String {
    format!("2019-03-{day:02}T{hour:02}:00:00Z")
}

pub fn pull_json(number: u64, login: &str, created_at: &str) -> Value {
    json!({ "number": number, "user": { "login": login, "type": "User" }, "created_at": created_at })
}

pub fn comment_json(login: &str, account_type: &str, at: &str) -> Value {
    json!({ "event": "commented", "actor": { "login": login, "type": account_type }, "created_at": at })
}

pub fn cross_reference_json(login: &str, account_type: &str, at: &str, source_repo: &str, source: u64) -> Value {
    json!({
        "event": "cross-referenced",
        "actor": { "login": login, "type": account_type },
        "created_at": at,
        "source": { "type": "issue", "issue": {
            "number": source,
            "repository": { "full_name": source_repo },
            "pull_request": {}
        }}
    })
}

/// One repository with `pulls` pulls; every pull has a file, a comment and,
/// from the second pull on, a cross-reference from its predecessor.
pub fn paginated_org(pulls: u64) -> MockOrg {
    let repo = "acme/api".to_string();
    let mut org = MockOrg::new("acme");
    org.teams = vec![("core".into(), vec![repo.clone()])];
    org.pulls.insert(
        repo.clone(),
        (1..=pulls)
            .map(|n| pull_json(n, &format!("dev{}", n % 7), &api_time(1 + (n % 28) as u32, 9)))
            .collect(),
    );
    for n in 1..=pulls {
        org.files.insert(
            (repo.clone(), n),
            vec![json!({ "filename": format!("src/mod{}/lib.rs", n % 5) })],
        );
        let mut timeline = vec![comment_json(
            &format!("dev{}", (n + 1) % 7),
            "User",
            &api_time(1 + (n % 28) as u32, 10),
        )];
        if n > 1 {
            timeline.push(cross_reference_json(
                "dev1",
                "User",
                &api_time(1 + (n % 28) as u32, 11),
                &repo,
                n - 1,
            ));
        }
        org.timelines.insert((repo.clone(), n), timeline);
    }
    org
}

// ---------------------------------------------------------------------------
// Independent oracles

/// Random rooted tree of `n` nodes labelled from a shared pool, rooted at
/// "/". Trees drawn from the same pool overlap in labels.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> ComponentGraph {
    if n == 0 {
        return ComponentGraph::empty();
    }
    let mut pool: Vec<String> = (b'a'..=b'l').map(|c| (c as char).to_string()).collect();
    pool.shuffle(rng);
    let mut g = ComponentGraph::with_root("/");
    for label in pool.into_iter().take(n - 1) {
        let parent = rng.gen_range(0..g.node_count());
        g.add_child(parent, label).unwrap();
    }
    g
}

pub fn sized_tree(rng: &mut impl Rng, sizes: std::ops::RangeInclusive<usize>) -> ComponentGraph {
    let n = rng.gen_range(sizes);
    random_tree(rng, n)
}

fn assignments(n1: usize, n2: usize) -> Vec<Vec<Option<usize>>> {
    fn go(
        i: usize,
        n1: usize,
        n2: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if i == n1 {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        go(i + 1, n1, n2, used, cur, out);
        cur.pop();
        for j in 0..n2 {
            if !used[j] {
                used[j] = true;
                cur.push(Some(j));
                go(i + 1, n1, n2, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, n1, n2, &mut vec![false; n2], &mut Vec::new(), &mut out);
    out
}

fn edge_set(g: &ComponentGraph) -> BTreeSet<(usize, usize)> {
    (0..g.node_count())
        .filter_map(|c| g.parent(c).map(|p| (p, c)))
        .collect()
}

/// Cost of the edit path induced by a complete injective partial mapping,
/// counted directly from node and edge sets.
pub fn induced_cost(g1: &ComponentGraph, g2: &ComponentGraph, map: &[Option<usize>], c: &CostModel) -> f64 {
    let mut cost = 0.0;
    let mut image = BTreeSet::new();
    for (i, m) in map.iter().enumerate() {
        match m {
            None => cost += c.node_delete,
            Some(j) => {
                image.insert(*j);
                if g1.label(i) != g2.label(*j) {
                    cost += c.node_substitute;
                }
            }
        }
    }
    cost += (g2.node_count() - image.len()) as f64 * c.node_insert;
    let e2 = edge_set(g2);
    let mut kept = 0;
    for (p, ch) in edge_set(g1) {
        match (map[p], map[ch]) {
            (Some(a), Some(b)) if e2.contains(&(a, b)) => kept += 1,
            _ => cost += c.edge_delete,
        }
    }
    cost + (e2.len() - kept) as f64 * c.edge_insert
}

/// Minimum over every injective partial assignment of `g1` into `g2`.
pub fn brute_force_ged(g1: &ComponentGraph, g2: &ComponentGraph, c: &CostModel) -> f64 {
    assignments(g1.node_count(), g2.node_count())
        .iter()
        .map(|m| induced_cost(g1, g2, m, c))
        .fold(f64::INFINITY, f64::min)
}

/// `|A ∩ B| / |A ∪ B|` by counting elements, `J(∅, ∅) = 1`.
pub fn jaccard_by_counting(a: &[u32], b: &[u32]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let common = a.iter().filter(|x| b.contains(*x)).count();
    let union = a.len() + b.iter().filter(|x| !a.contains(*x)).count();
    if union == 0 {
        1.0
    } else {
        common as f64 / union as f64
    }
}

/// For every file, the longest component equal to or a directory prefix of
/// it, found by scanning all components.
pub fn longest_prefix_scan(components: &[String], files: &[String]) -> BTreeSet<String> {
    files
        .iter()
        .map(|f| {
            components
                .iter()
                .filter(|c| f == *c || f.starts_with(&format!("{c}/")))
                .max_by_key(|c| c.len())
                .cloned()
                .unwrap_or_else(|| UNOWNED_COMPONENT.to_string())
        })
        .collect()
}

/// Up to `max_components` random component directories and up to
/// `max_files` random file paths over a small directory alphabet.
pub fn random_mapping_instance(
    rng: &mut impl Rng,
    max_components: usize,
    max_files: usize,
) -> (Vec<SnapshotEntry>, Vec<String>) {
    let dirs = ["src", "lib", "api", "web", "core", "util", "db", "ui"];
    let random_dir = |rng: &mut dyn rand::RngCore, depth: usize| -> String {
        (0..depth)
            .map(|_| *dirs.choose(rng).unwrap())
            .collect::<Vec<_>>()
            .join("/")
    };
    let mut components = BTreeSet::new();
    for _ in 0..rng.gen_range(1..=max_components) {
        let depth = rng.gen_range(1..=4);
        components.insert(random_dir(rng, depth));
    }
    let entries = components
        .into_iter()
        .enumerate()
        .map(|(i, c)| SnapshotEntry {
            component: c,
            owner: format!("team{}", i % 5),
        })
        .collect();
    let files = (0..rng.gen_range(1..=max_files))
        .map(|i| {
            let depth = rng.gen_range(0..=4);
            let dir = random_dir(rng, depth);
            if dir.is_empty() {
                format!("f{i}.rs")
            } else {
                format!("{dir}/f{i}.rs")
            }
        })
        .collect();
    (entries, files)
}

// ---------------------------------------------------------------------------
// Fixtures

pub fn ts(day: u32, hour: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 3, day, hour, 0, 0).unwrap()
}

pub fn fig2_review(i: u64) -> ReviewId {
    ReviewId::new("example/fig2", i + 1).unwrap()
}

/// Reference events of the five-review example network: c1→c2, c2→c3,
/// c2→c0, c3→c2, c3→c0, c3→c1, with c4 referencing nothing.
pub fn fig2_events() -> Vec<ReviewEvent> {
    [(1, 2), (2, 3), (2, 0), (3, 2), (3, 0), (3, 1)]
        .iter()
        .enumerate()
        .map(|(i, &(s, t))| ReviewEvent {
            event_id: format!("fig2/{i}"),
            kind: EventKind::Referenced,
            review: fig2_review(t),
            actor: Actor::new("reviewer", false),
            timestamp: ts(1 + i as u32, 12),
            source_review: Some(fig2_review(s)),
        })
        .collect()
}

/// A dump in which humans only comment and every reference is authored by
/// a bot, plus a snapshot owning all touched files.
pub fn write_bot_reference_fixture(dir: &Path) {
    let review = |n| ReviewId::new("acme/bots", n).unwrap();
    let pulls: Vec<PullRecord> = (1..=4)
        .map(|n| PullRecord {
            review: review(n),
            author: Actor::new(format!("human{n}"), false),
            created_at: ts(n as u32, 8),
            files: vec![format!("svc/part{n}/main.rs")],
        })
        .collect();
    let mut events = Vec::new();
    for n in 1..=4u64 {
        events.push(ReviewEvent {
            event_id: format!("{}/timeline/0", review(n)),
            kind: EventKind::Commented,
            review: review(n),
            actor: Actor::new(format!("human{}", n % 4 + 1), false),
            timestamp: ts(n as u32, 10),
            source_review: None,
        });
        if n > 1 {
            events.push(ReviewEvent {
                event_id: format!("{}/timeline/1", review(n)),
                kind: EventKind::Referenced,
                review: review(n - 1),
                actor: Actor::new("linker[bot]", true),
                timestamp: ts(n as u32, 11),
                source_review: Some(review(n)),
            });
        }
    }
    events.sort_by(|a, b| (&a.review, &a.event_id).cmp(&(&b.review, &b.event_id)));
    EventStore { pulls, events }.write_dump(dir).unwrap();
    let entries = vec![
        SnapshotEntry {
            component: "svc".into(),
            owner: "platform".into(),
        },
        SnapshotEntry {
            component: "svc/part1".into(),
            owner: "platform".into(),
        },
        SnapshotEntry {
            component: "svc/part2".into(),
            owner: "search".into(),
        },
    ];
    ComponentSnapshot::new(chrono::NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), entries)
        .unwrap()
        .write(&dir.join("snapshots"))
        .unwrap();
}

// ---------------------------------------------------------------------------
// Binary driver

pub fn reviewnet(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reviewnet"));
    cmd.args(args)
        .env_remove("GITHUB_TOKEN")
        .env_remove("GITHUB_API_URL")
        .env_remove("REVIEWNET_SALT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("run reviewnet")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}
