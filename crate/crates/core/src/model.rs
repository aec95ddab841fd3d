//! Code review network domain types.
//!
//! A code review network is a directed graph whose vertices are code reviews
//! (pull requests) and whose edges are human-made references from one review
//! to another. An edge `(a, b)` means review `a` references review `b`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ComponentGraph;
use crate::ingest::{EventKind, ReviewEvent};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("rejected record {event_id}: {reason}")]
    RejectedRecord { event_id: String, reason: String },
    #[error("linked ratio is undefined for an empty review population")]
    UndefinedRatio,
    #[error("network review {0} is missing from the review population")]
    NotInPopulation(ReviewId),
    #[error("invalid review id {0:?}")]
    InvalidReviewId(String),
}

/// Identifies one code review: a pull request number within a repository.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReviewId {
    pub repo: String,
    pub number: u64,
}

impl ReviewId {
    pub fn new(repo: impl Into<String>, number: u64) -> Result<Self, ModelError> {
        let repo = repo.into();
        if repo.is_empty() || number == 0 {
            return Err(ModelError::InvalidReviewId(format!("{repo}#{number}")));
        }
        Ok(ReviewId { repo, number })
    }

    pub fn is_valid(&self) -> bool {
        !self.repo.is_empty() && self.number >= 1
    }
}

impl fmt::Display for ReviewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.repo, self.number)
    }
}

impl FromStr for ReviewId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (repo, number) = s
            .rsplit_once('#')
            .ok_or_else(|| ModelError::InvalidReviewId(s.to_string()))?;
        let number = number.parse().map_err(|_| ModelError::InvalidReviewId(s.to_string()))?;
        ReviewId::new(repo, number)
    }
}

/// A reference from `source` to `target`, stamped with the earliest time it
/// was made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEdge {
    pub source: ReviewId,
    pub target: ReviewId,
    pub timestamp: DateTime<Utc>,
}

/// The directed graph `G = (C, R)`.
///
/// Immutable once built. Edges are keyed by `(source, target)` so iteration
/// order is canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeReviewNetwork {
    reviews: BTreeSet<ReviewId>,
    edges: BTreeMap<(ReviewId, ReviewId), DateTime<Utc>>,
}

impl CodeReviewNetwork {
    pub fn reviews(&self) -> &BTreeSet<ReviewId> {
        &self.reviews
    }

    pub fn node_count(&self) -> usize {
        self.reviews.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = ReferenceEdge> + '_ {
        self.edges.iter().map(|((s, t), ts)| ReferenceEdge {
            source: s.clone(),
            target: t.clone(),
            timestamp: *ts,
        })
    }

    pub fn contains_edge(&self, source: &ReviewId, target: &ReviewId) -> bool {
        self.edges.contains_key(&(source.clone(), target.clone()))
    }

    /// Reviews with at least one incident edge, in either direction.
    pub fn linked_reviews(&self) -> BTreeSet<&ReviewId> {
        self.edges.keys().flat_map(|(s, t)| [s, t]).collect()
    }

    /// Earliest timestamp of any edge incident to each linked review.
    pub fn earliest_incident_reference(&self) -> BTreeMap<ReviewId, DateTime<Utc>> {
        let mut out: BTreeMap<ReviewId, DateTime<Utc>> = BTreeMap::new();
        for ((s, t), ts) in &self.edges {
            for r in [s, t] {
                out.entry(r.clone())
                    .and_modify(|cur| *cur = (*cur).min(*ts))
                    .or_insert(*ts);
            }
        }
        out
    }
}

/// Per-review enhancements: participants (f1), component graph (f2) and
/// owning teams (f3).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnhancementMaps {
    pub participants: BTreeMap<ReviewId, BTreeSet<String>>,
    pub components: BTreeMap<ReviewId, ComponentGraph>,
    pub teams: BTreeMap<ReviewId, BTreeSet<String>>,
}

/// Builds the network from `referenced` events.
///
/// The event's `source_review` is the review in which the reference was
/// written; its `review` is the referenced one. Duplicate pairs keep the
/// earliest timestamp and self-references are dropped.
pub fn build_network(reference_events: &[ReviewEvent]) -> Result<CodeReviewNetwork, ModelError> {
    build_network_with_reviews(reference_events, std::iter::empty())
}

/// Like [`build_network`], but also keeps `extra_reviews` as vertices even
/// when they have no incident edge.
pub fn build_network_with_reviews<'a>(
    reference_events: &[ReviewEvent],
    extra_reviews: impl IntoIterator<Item = &'a ReviewId>,
) -> Result<CodeReviewNetwork, ModelError> {
    let mut net = CodeReviewNetwork::default();
    for r in extra_reviews {
        if !r.is_valid() {
            return Err(ModelError::InvalidReviewId(r.to_string()));
        }
        net.reviews.insert(r.clone());
    }
    for ev in reference_events {
        let reject = |reason: &str| ModelError::RejectedRecord {
            event_id: ev.event_id.clone(),
            reason: reason.to_string(),
        };
        if ev.kind != EventKind::Referenced {
            return Err(reject("not a referenced event"));
        }
        let source = ev
            .source_review
            .as_ref()
            .ok_or_else(|| reject("missing source review"))?;
        if !source.is_valid() {
            return Err(reject("invalid source review"));
        }
        if !ev.review.is_valid() {
            return Err(reject("invalid target review"));
        }
        let target = &ev.review;
        if source == target {
            continue;
        }
        net.reviews.insert(source.clone());
        net.reviews.insert(target.clone());
        net.edges
            .entry((source.clone(), target.clone()))
            .and_modify(|ts| *ts = (*ts).min(ev.timestamp))
            .or_insert(ev.timestamp);
    }
    Ok(net)
}

/// Fraction of `all_reviews` with at least one incident reference edge.
pub fn linked_ratio(network: &CodeReviewNetwork, all_reviews: &BTreeSet<ReviewId>) -> Result<f64, ModelError> {
    if all_reviews.is_empty() {
        return Err(ModelError::UndefinedRatio);
    }
    if let Some(r) = network.reviews.iter().find(|r| !all_reviews.contains(*r)) {
        return Err(ModelError::NotInPopulation(r.clone()));
    }
    let linked = network.linked_reviews();
    let count = all_reviews.iter().filter(|r| linked.contains(r)).count();
    Ok(count as f64 / all_reviews.len() as f64)
}
