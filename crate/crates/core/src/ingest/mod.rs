//! Review and timeline-event acquisition.
//!
//! Data enters either through [`crawl`] (a GitHub-compatible REST API) or
//! through line-delimited JSON dumps. Both paths produce an [`EventStore`],
//! and everything downstream of the store is a pure function over it.

pub mod crawl;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ReviewId;

pub use crawl::{crawl, ApiConfig, CrawlError};

pub const PULLS_FILE: &str = "pulls.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid sampling frame: start {start} is after end {end}")]
    InvertedFrame { start: NaiveDate, end: NaiveDate },
    #[error("{}:{line}: {reason}", path.display())]
    InvalidRecord { path: PathBuf, line: usize, reason: String },
    #[error("duplicate event id {0:?}")]
    DuplicateEventId(String),
    #[error("invalid file path {path:?}: {reason}")]
    InvalidPath { path: String, reason: &'static str },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Created,
    Commented,
    Reviewed,
    Referenced,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Actor {
    pub login: String,
    pub is_bot: bool,
}

impl Actor {
    /// The `is_bot` flag is forced on for logins carrying the `[bot]` suffix.
    pub fn new(login: impl Into<String>, is_bot: bool) -> Self {
        let login = login.into();
        let is_bot = is_bot || is_bot_login(&login);
        Actor { login, is_bot }
    }

    /// Builds an actor from the API's `login` and account `type` fields.
    pub fn from_api(login: &str, account_type: Option<&str>) -> Self {
        Actor::new(login, account_type == Some("Bot"))
    }
}

pub fn is_bot_login(login: &str) -> bool {
    login.ends_with("[bot]")
}

/// Second-resolution UTC timestamps written as `YYYY-MM-DDTHH:MM:SSZ`.
pub mod utc_seconds {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(ts: &DateTime<Utc>) -> String {
        ts.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    pub fn parse(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
    }

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// One timeline occurrence on a review.
///
/// For `Referenced` events, `review` is the referenced review and
/// `source_review` the review in which the reference was written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub event_id: String,
    pub kind: EventKind,
    pub review: ReviewId,
    pub actor: Actor,
    #[serde(with = "utc_seconds")]
    pub timestamp: DateTime<Utc>,
    pub source_review: Option<ReviewId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRecord {
    #[serde(flatten)]
    pub review: ReviewId,
    pub author: Actor,
    #[serde(with = "utc_seconds")]
    pub created_at: DateTime<Utc>,
    pub files: Vec<String>,
}

/// Normalizes a repository-relative path to forward slashes with no leading
/// slash and no `.` segments. `..` segments are rejected.
pub fn normalize_path(raw: &str) -> Result<String, IngestError> {
    let unified = raw.replace('\\', "/");
    let mut segments = Vec::new();
    for seg in unified.split('/') {
        match seg {
            "" | "." => continue,
            ".." => {
                return Err(IngestError::InvalidPath {
                    path: raw.to_string(),
                    reason: "parent-directory segment",
                })
            }
            s => segments.push(s),
        }
    }
    if segments.is_empty() {
        return Err(IngestError::InvalidPath {
            path: raw.to_string(),
            reason: "empty path",
        });
    }
    Ok(segments.join("/"))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventStore {
    pub pulls: Vec<PullRecord>,
    pub events: Vec<ReviewEvent>,
}

impl EventStore {
    pub fn review_ids(&self) -> BTreeSet<ReviewId> {
        self.pulls.iter().map(|p| p.review.clone()).collect()
    }

    pub fn pull(&self, id: &ReviewId) -> Option<&PullRecord> {
        self.pulls.iter().find(|p| &p.review == id)
    }

    pub fn files_by_review(&self) -> BTreeMap<ReviewId, Vec<String>> {
        self.pulls.iter().map(|p| (p.review.clone(), p.files.clone())).collect()
    }

    /// Checks event-id uniqueness.
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = HashSet::new();
        for ev in &self.events {
            if !seen.insert(ev.event_id.as_str()) {
                return Err(IngestError::DuplicateEventId(ev.event_id.clone()));
            }
        }
        Ok(())
    }

    pub fn load_dump(dir: &Path) -> Result<Self, IngestError> {
        let pulls_path = dir.join(PULLS_FILE);
        let mut pulls: Vec<PullRecord> = read_jsonl(&pulls_path)?;
        for (i, p) in pulls.iter_mut().enumerate() {
            let bad = |reason: String| IngestError::InvalidRecord {
                path: pulls_path.clone(),
                line: i + 1,
                reason,
            };
            check_review(&p.review).map_err(bad)?;
            check_actor(&p.author).map_err(bad)?;
            p.author = Actor::new(std::mem::take(&mut p.author.login), p.author.is_bot);
            p.files = p
                .files
                .iter()
                .map(|f| normalize_path(f))
                .collect::<Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
        }

        let events_path = dir.join(EVENTS_FILE);
        let mut events: Vec<ReviewEvent> = read_jsonl(&events_path)?;
        for (i, ev) in events.iter_mut().enumerate() {
            let bad = |reason: String| IngestError::InvalidRecord {
                path: events_path.clone(),
                line: i + 1,
                reason,
            };
            check_review(&ev.review).map_err(bad)?;
            check_actor(&ev.actor).map_err(bad)?;
            ev.actor = Actor::new(std::mem::take(&mut ev.actor.login), ev.actor.is_bot);
            match (ev.kind, &ev.source_review) {
                (EventKind::Referenced, None) => return Err(bad("referenced event without source_review".into())),
                (EventKind::Referenced, Some(src)) => check_review(src).map_err(bad)?,
                (_, Some(_)) => return Err(bad("source_review on a non-referenced event".into())),
                (_, None) => {}
            }
        }

        let store = EventStore { pulls, events };
        store.validate()?;
        Ok(store)
    }

    pub fn write_dump(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
            path: dir.into(),
            source,
        })?;
        write_jsonl(&dir.join(PULLS_FILE), &self.pulls)?;
        write_jsonl(&dir.join(EVENTS_FILE), &self.events)
    }
}

fn check_review(r: &ReviewId) -> Result<(), String> {
    if r.is_valid() {
        Ok(())
    } else {
        Err(format!("invalid review id {r}"))
    }
}

fn check_actor(a: &Actor) -> Result<(), String> {
    if a.login.is_empty() {
        Err("empty actor login".into())
    } else {
        Ok(())
    }
}

pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.into(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: path.into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IngestError::InvalidRecord {
            path: path.into(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IngestError> {
    let io = |source| IngestError::Io {
        path: path.into(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// The timeline endpoint carries no creation event; one is derived per pull
/// from the pull record itself.
pub fn synthesize_creation_events(pulls: &[PullRecord]) -> Vec<ReviewEvent> {
    pulls
        .iter()
        .map(|p| ReviewEvent {
            event_id: format!("{}/created", p.review),
            kind: EventKind::Created,
            review: p.review.clone(),
            actor: p.author.clone(),
            timestamp: p.created_at,
            source_review: None,
        })
        .collect()
}

/// Keeps events whose UTC date lies in the closed interval `[start, end]`,
/// optionally dropping bot-authored ones. Input order is preserved.
pub fn filter_events(
    events: &[ReviewEvent],
    start: NaiveDate,
    end: NaiveDate,
    exclude_bots: bool,
) -> Result<Vec<ReviewEvent>, IngestError> {
    if start > end {
        return Err(IngestError::InvertedFrame { start, end });
    }
    Ok(events
        .iter()
        .filter(|ev| {
            let day = ev.timestamp.date_naive();
            day >= start && day <= end
        })
        .filter(|ev| !(exclude_bots && (ev.actor.is_bot || is_bot_login(&ev.actor.login))))
        .cloned()
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractedReferences {
    pub events: Vec<ReviewEvent>,
    /// References whose source or target is not a known pull.
    pub unresolved: usize,
    pub self_references: usize,
}

/// Selects `referenced` events whose both ends resolve to known pulls.
pub fn extract_references(events: &[ReviewEvent], known: &BTreeSet<ReviewId>) -> ExtractedReferences {
    let mut out = ExtractedReferences::default();
    for ev in events.iter().filter(|e| e.kind == EventKind::Referenced) {
        let Some(source) = &ev.source_review else {
            out.unresolved += 1;
            continue;
        };
        if source == &ev.review {
            out.self_references += 1;
        } else if known.contains(source) && known.contains(&ev.review) {
            out.events.push(ev.clone());
        } else {
            out.unresolved += 1;
        }
    }
    out
}

/// Distinct actor logins per review over all of its events.
pub fn group_participants(events: &[ReviewEvent]) -> BTreeMap<ReviewId, BTreeSet<String>> {
    let mut out: BTreeMap<ReviewId, BTreeSet<String>> = BTreeMap::new();
    for ev in events {
        out.entry(ev.review.clone()).or_default().insert(ev.actor.login.clone());
    }
    out
}
