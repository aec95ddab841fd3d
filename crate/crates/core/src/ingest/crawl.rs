//! REST crawler: teams, then team repositories, then pulls, then per-pull
//! files and timeline events.
//!
//! Only the per-issue timeline endpoint is used for events. The activity
//! events endpoint is capped at 300 events and the search endpoint at 1000
//! results, so neither can enumerate an organization.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde_json::Value;
use thiserror::Error;

use super::{normalize_path, utc_seconds, Actor, EventKind, EventStore, PullRecord, ReviewEvent};
use crate::model::ReviewId;

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub base_url: String,
    pub token: String,
    pub org: String,
    pub per_page: u32,
    /// Retries for 5xx and transport failures.
    pub max_retries: u32,
    /// Retries for rate-limit responses.
    pub max_rate_limit_retries: u32,
    pub backoff: Duration,
    pub max_wait: Duration,
    pub parallelism: usize,
}

impl ApiConfig {
    pub fn new(base_url: impl Into<String>, token: impl Into<String>, org: impl Into<String>) -> Self {
        ApiConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: token.into(),
            org: org.into(),
            per_page: 100,
            max_retries: 4,
            max_rate_limit_retries: 10,
            backoff: Duration::from_millis(500),
            max_wait: Duration::from_secs(900),
            parallelism: 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("credential error: {0}")]
    Credential(String),
    #[error("partial crawl: {} repositories completed, {} failed ({})", completed.len(), failed.len(), failure_summary(failed))]
    Partial {
        completed: Vec<String>,
        failed: Vec<(String, String)>,
        store: Box<EventStore>,
    },
}

fn failure_summary(failed: &[(String, String)]) -> String {
    failed
        .iter()
        .map(|(r, e)| format!("{r}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Minimal blocking GET transport.
pub trait Transport: Sync {
    fn get(&self, url: &str, token: &str) -> Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, token: &str) -> Result<HttpResponse, String> {
        let result = self
            .agent
            .get(url)
            .set("Accept", "application/vnd.github+json")
            .set("X-GitHub-Api-Version", "2022-11-28")
            .set("Authorization", &format!("Bearer {token}"))
            .call();
        let resp = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => return Err(e.to_string()),
        };
        let status = resp.status();
        let headers = resp
            .headers_names()
            .into_iter()
            .filter_map(|name| resp.header(&name).map(|v| (name.clone(), v.to_string())))
            .collect();
        let body = resp.into_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, headers, body })
    }
}

#[derive(Debug)]
enum RequestError {
    Credential(String),
    Failed(String),
}

/// Crawls every pull of every repository of every team of the organization.
pub fn crawl(config: &ApiConfig) -> Result<EventStore, CrawlError> {
    Crawler::new(config.clone(), UreqTransport::default()).run()
}

pub struct Crawler<T> {
    config: ApiConfig,
    transport: T,
}

impl<T: Transport> Crawler<T> {
    pub fn new(config: ApiConfig, transport: T) -> Self {
        Crawler { config, transport }
    }

    pub fn run(&self) -> Result<EventStore, CrawlError> {
        let repos = self.list_repositories()?;
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<RepoData, RequestError>>>> =
            Mutex::new((0..repos.len()).map(|_| None).collect());
        let workers = self.config.parallelism.max(1).min(repos.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(repo) = repos.get(i) else { break };
                    let result = self.crawl_repository(repo);
                    results.lock().expect("results lock")[i] = Some(result);
                });
            }
        });

        let mut store = EventStore::default();
        let mut completed = Vec::new();
        let mut failed = Vec::new();
        let results = results.into_inner().expect("results lock");
        for (repo, result) in repos.iter().zip(results) {
            match result.expect("every repository visited") {
                Ok(data) => {
                    store.pulls.extend(data.pulls);
                    store.events.extend(data.events);
                    completed.push(repo.clone());
                }
                Err(RequestError::Credential(msg)) => return Err(CrawlError::Credential(msg)),
                Err(RequestError::Failed(msg)) => failed.push((repo.clone(), msg)),
            }
        }
        if failed.is_empty() {
            Ok(store)
        } else {
            Err(CrawlError::Partial {
                completed,
                failed,
                store: Box::new(store),
            })
        }
    }

    fn list_repositories(&self) -> Result<Vec<String>, CrawlError> {
        let lift = |e| match e {
            RequestError::Credential(m) => CrawlError::Credential(m),
            RequestError::Failed(m) => CrawlError::Partial {
                completed: vec![],
                failed: vec![(self.config.org.clone(), m)],
                store: Box::default(),
            },
        };
        let base = &self.config.base_url;
        let org = &self.config.org;
        let teams = self.get_all(&format!("{base}/orgs/{org}/teams")).map_err(lift)?;
        let mut repos = BTreeSet::new();
        for team in teams {
            let Some(slug) = team.get("slug").and_then(Value::as_str) else {
                continue;
            };
            for repo in self
                .get_all(&format!("{base}/orgs/{org}/teams/{slug}/repos"))
                .map_err(lift)?
            {
                if let Some(name) = repo.get("full_name").and_then(Value::as_str) {
                    repos.insert(name.to_string());
                }
            }
        }
        Ok(repos.into_iter().collect())
    }

    fn crawl_repository(&self, repo: &str) -> Result<RepoData, RequestError> {
        let base = &self.config.base_url;
        let mut data = RepoData::default();
        let mut pulls = Vec::new();
        for raw in self.get_all(&format!("{base}/repos/{repo}/pulls?state=all"))? {
            pulls.push(parse_pull(repo, &raw).map_err(RequestError::Failed)?);
        }
        pulls.sort_by_key(|(id, _, _)| id.number);
        for (review, author, created_at) in pulls {
            let n = review.number;
            let files = self
                .get_all(&format!("{base}/repos/{repo}/pulls/{n}/files"))?
                .iter()
                .filter_map(|f| f.get("filename").and_then(Value::as_str))
                .map(|f| normalize_path(f).map_err(|e| RequestError::Failed(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let timeline = self.get_all(&format!("{base}/repos/{repo}/issues/{n}/timeline"))?;
            data.events.extend(
                timeline
                    .iter()
                    .enumerate()
                    .filter_map(|(i, item)| convert_timeline_item(&review, i, item)),
            );
            data.pulls.push(PullRecord {
                review,
                author,
                created_at,
                files,
            });
        }
        Ok(data)
    }

    /// Fetches every page, following `Link: rel="next"`.
    fn get_all(&self, url: &str) -> Result<Vec<Value>, RequestError> {
        let sep = if url.contains('?') { '&' } else { '?' };
        let mut next = Some(format!("{url}{sep}per_page={}", self.config.per_page));
        let mut items = Vec::new();
        while let Some(page_url) = next.take() {
            let resp = self.request(&page_url)?;
            let body: Value = serde_json::from_str(&resp.body)
                .map_err(|e| RequestError::Failed(format!("{page_url}: bad JSON: {e}")))?;
            match body {
                Value::Array(page) => items.extend(page),
                _ => return Err(RequestError::Failed(format!("{page_url}: expected a JSON array"))),
            }
            next = resp.header("link").and_then(next_link);
        }
        Ok(items)
    }

    fn request(&self, url: &str) -> Result<HttpResponse, RequestError> {
        let mut failures = 0;
        let mut rate_limited = 0;
        loop {
            let outcome = self.transport.get(url, &self.config.token);
            let delay = match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp),
                Ok(resp) if resp.status == 401 => {
                    return Err(RequestError::Credential(format!("{url}: 401 {}", resp.body.trim())))
                }
                Ok(resp) if matches!(resp.status, 403 | 429) => match rate_limit_wait(&resp) {
                    Some(wait) => {
                        rate_limited += 1;
                        if rate_limited > self.config.max_rate_limit_retries {
                            return Err(RequestError::Failed(format!("{url}: rate limit not lifted")));
                        }
                        wait.min(self.config.max_wait)
                    }
                    None if resp.status == 403 => {
                        return Err(RequestError::Credential(format!("{url}: 403 {}", resp.body.trim())))
                    }
                    None => {
                        failures += 1;
                        self.backoff(failures, url, "429")?
                    }
                },
                Ok(resp) if resp.status >= 500 => {
                    failures += 1;
                    self.backoff(failures, url, &resp.status.to_string())?
                }
                Ok(resp) => return Err(RequestError::Failed(format!("{url}: HTTP {}", resp.status))),
                Err(e) => {
                    failures += 1;
                    self.backoff(failures, url, &e)?
                }
            };
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
        }
    }

    fn backoff(&self, failures: u32, url: &str, what: &str) -> Result<Duration, RequestError> {
        if failures > self.config.max_retries {
            return Err(RequestError::Failed(format!(
                "{url}: {what} after {} retries",
                self.config.max_retries
            )));
        }
        Ok(self.config.backoff * 2u32.saturating_pow(failures - 1))
    }
}

#[derive(Default)]
struct RepoData {
    pulls: Vec<PullRecord>,
    events: Vec<ReviewEvent>,
}

fn rate_limit_wait(resp: &HttpResponse) -> Option<Duration> {
    if let Some(secs) = resp.header("retry-after").and_then(|v| v.trim().parse::<u64>().ok()) {
        return Some(Duration::from_secs(secs));
    }
    if resp.header("x-ratelimit-remaining").map(str::trim) == Some("0") {
        let reset = resp.header("x-ratelimit-reset")?.trim().parse::<i64>().ok()?;
        let now = Utc::now().timestamp();
        return Some(Duration::from_secs(reset.saturating_sub(now).max(1) as u64));
    }
    None
}

/// Extracts the `rel="next"` target from an RFC 8288 `Link` header.
pub fn next_link(header: &str) -> Option<String> {
    header.split(',').find_map(|part| {
        let mut pieces = part.split(';');
        let target = pieces.next()?.trim();
        let is_next = pieces.any(|p| {
            let p = p.trim();
            p == "rel=\"next\"" || p == "rel=next"
        });
        (is_next && target.starts_with('<') && target.ends_with('>')).then(|| target[1..target.len() - 1].to_string())
    })
}

fn actor_of(v: &Value) -> Option<Actor> {
    let login = v.get("login")?.as_str()?;
    if login.is_empty() {
        return None;
    }
    Some(Actor::from_api(login, v.get("type").and_then(Value::as_str)))
}

fn timestamp_of(v: &Value, field: &str) -> Option<DateTime<Utc>> {
    v.get(field)
        .and_then(Value::as_str)
        .and_then(|s| utc_seconds::parse(s).ok())
}

fn parse_pull(repo: &str, raw: &Value) -> Result<(ReviewId, Actor, DateTime<Utc>), String> {
    let number = raw.get("number").and_then(Value::as_u64).ok_or("pull without number")?;
    let review = ReviewId::new(repo, number).map_err(|e| e.to_string())?;
    let author = raw
        .get("user")
        .and_then(actor_of)
        .ok_or_else(|| format!("{review}: pull without author"))?;
    let created_at = timestamp_of(raw, "created_at").ok_or_else(|| format!("{review}: bad created_at"))?;
    Ok((review, author, created_at))
}

fn repo_of_issue(issue: &Value) -> Option<String> {
    if let Some(name) = issue.pointer("/repository/full_name").and_then(Value::as_str) {
        return Some(name.to_string());
    }
    let url = issue.get("repository_url")?.as_str()?;
    let (_, tail) = url.split_once("/repos/")?;
    Some(tail.trim_end_matches('/').to_string())
}

/// Converts one timeline item into a [`ReviewEvent`].
///
/// `cross-referenced` items (and `referenced` items carrying an issue
/// payload) become `Referenced` events whose source is the referencing
/// issue or pull. Items without an attributable actor or timestamp are
/// skipped.
pub fn convert_timeline_item(review: &ReviewId, index: usize, item: &Value) -> Option<ReviewEvent> {
    let name = item.get("event").and_then(Value::as_str).unwrap_or("");
    let actor = item
        .get("actor")
        .and_then(actor_of)
        .or_else(|| item.get("user").and_then(actor_of))?;
    let (kind, timestamp) = match name {
        "commented" => (EventKind::Commented, timestamp_of(item, "created_at")?),
        "reviewed" => (
            EventKind::Reviewed,
            timestamp_of(item, "submitted_at").or_else(|| timestamp_of(item, "created_at"))?,
        ),
        "cross-referenced" | "referenced" if item.pointer("/source/issue").is_some() => {
            (EventKind::Referenced, timestamp_of(item, "created_at")?)
        }
        _ => (EventKind::Other, timestamp_of(item, "created_at")?),
    };
    let source_review = if kind == EventKind::Referenced {
        let issue = item.pointer("/source/issue")?;
        let number = issue.get("number")?.as_u64()?;
        Some(ReviewId::new(repo_of_issue(issue)?, number).ok()?)
    } else {
        None
    };
    Some(ReviewEvent {
        event_id: format!("{review}/timeline/{index}"),
        kind,
        review: review.clone(),
        actor,
        timestamp,
        source_review,
    })
}
