//! Seeded synthetic organizations.
//!
//! Generates teams owning components, pulls touching those components,
//! timeline activity and cross-review references, written in the same dump
//! and snapshot formats a real crawl produces.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::catalog::{CatalogError, ComponentSnapshot, SnapshotEntry};
use crate::ingest::{Actor, EventKind, EventStore, IngestError, PullRecord, ReviewEvent};
use crate::model::ReviewId;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub teams: usize,
    pub components_per_team: usize,
    pub reviews: usize,
    pub reference_prob: f64,
    /// Probability that a reference crosses team boundaries.
    pub cross_team_bias: f64,
    /// Probability that a timeline event is authored by a bot.
    pub bot_fraction: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            teams: 6,
            components_per_team: 4,
            reviews: 300,
            reference_prob: 0.5,
            cross_team_bias: 0.5,
            bot_fraction: 0.1,
            seed: 42,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.teams == 0 || self.components_per_team == 0 || self.reviews == 0 {
            return Err(SynthError::InvalidParams("counts must be at least 1"));
        }
        let probs = [self.reference_prob, self.cross_team_bias, self.bot_fraction];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SynthError::InvalidParams("probabilities must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub struct SynthData {
    pub store: EventStore,
    pub snapshots: Vec<ComponentSnapshot>,
}

pub struct SynthOutput {
    pub dump_dir: PathBuf,
    pub snapshot_dir: PathBuf,
    pub pulls: usize,
    pub events: usize,
}

const ORG: &str = "acme";
const MEMBERS_PER_TEAM: usize = 4;
const BOTS: [&str; 2] = ["ci-runner[bot]", "deps-updater[bot]"];

fn team_name(t: usize) -> String {
    format!("team-{t:02}")
}

fn team_dir(t: usize) -> String {
    format!("svc-{t:02}")
}

fn module_dir(t: usize, k: usize) -> String {
    format!("{}/mod-{k:02}", team_dir(t))
}

fn member(t: usize, m: usize) -> String {
    format!("dev-{t:02}-{m}")
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Two snapshots: the initial structure, and a mid-year one in which the
/// first module of every team gained a `core` subcomponent.
fn snapshots(params: &SynthParams) -> Result<Vec<ComponentSnapshot>, SynthError> {
    let mut base = Vec::new();
    for t in 0..params.teams {
        base.push(SnapshotEntry {
            component: team_dir(t),
            owner: team_name(t),
        });
        for k in 0..params.components_per_team {
            base.push(SnapshotEntry {
                component: module_dir(t, k),
                owner: team_name(t),
            });
        }
    }
    let mut later = base.clone();
    for t in 0..params.teams {
        later.push(SnapshotEntry {
            component: format!("{}/core", module_dir(t, 0)),
            owner: team_name(t),
        });
    }
    Ok(vec![
        ComponentSnapshot::new(date(2019, 1, 1), base)?,
        ComponentSnapshot::new(date(2019, 7, 1), later)?,
    ])
}

type TimelineEntry = (EventKind, Actor, DateTime<Utc>, Option<ReviewId>);

struct Review {
    id: ReviewId,
    team: usize,
    created_at: DateTime<Utc>,
}

fn pick_actor(rng: &mut ChaCha8Rng, params: &SynthParams, team: usize) -> Actor {
    if rng.gen_bool(params.bot_fraction) {
        Actor::new(*BOTS.choose(rng).expect("bots"), true)
    } else {
        // mostly the own team, sometimes a visitor
        let t = if params.teams > 1 && rng.gen_bool(0.2) {
            rng.gen_range(0..params.teams)
        } else {
            team
        };
        Actor::new(member(t, rng.gen_range(0..MEMBERS_PER_TEAM)), false)
    }
}

pub fn generate_data(params: &SynthParams) -> Result<SynthData, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let start = Utc
        .with_ymd_and_hms(2018, 12, 1, 0, 0, 0)
        .single()
        .expect("valid start");
    let span_secs = (Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).single().expect("valid end") - start).num_seconds();

    let mut created: Vec<i64> = (0..params.reviews).map(|_| rng.gen_range(0..span_secs)).collect();
    created.sort_unstable();
    let mut next_number = vec![1u64; params.teams];
    let mut reviews = Vec::with_capacity(params.reviews);
    let mut pulls = Vec::with_capacity(params.reviews);
    for offset in created {
        let team = rng.gen_range(0..params.teams);
        let id = ReviewId::new(format!("{ORG}/{}", team_dir(team)), next_number[team]).expect("valid id");
        next_number[team] += 1;
        let created_at = start + Duration::seconds(offset);

        let mut modules: Vec<usize> = (0..params.components_per_team).collect();
        modules.shuffle(&mut rng);
        modules.truncate(rng.gen_range(1..=2.min(params.components_per_team)));
        let mut files = Vec::new();
        for &k in &modules {
            for j in 0..rng.gen_range(1..=3) {
                let sub = if k == 0 && rng.gen_bool(0.3) { "core" } else { "src" };
                files.push(format!("{}/{sub}/file{j}.rs", module_dir(team, k)));
            }
        }
        if rng.gen_bool(0.05) {
            files.push("docs/README.md".to_string());
        }
        files.sort();
        files.dedup();

        let author = Actor::new(member(team, rng.gen_range(0..MEMBERS_PER_TEAM)), false);
        pulls.push(PullRecord {
            review: id.clone(),
            author,
            created_at,
            files,
        });
        reviews.push(Review { id, team, created_at });
    }

    // timeline per review, filled in creation order
    let mut timelines: Vec<Vec<TimelineEntry>> = (0..reviews.len()).map(|_| Vec::new()).collect();
    for (i, r) in reviews.iter().enumerate() {
        for _ in 0..rng.gen_range(1..=4) {
            let kind = if rng.gen_bool(0.5) {
                EventKind::Commented
            } else {
                EventKind::Reviewed
            };
            let actor = pick_actor(&mut rng, params, r.team);
            let ts = r.created_at + Duration::seconds(rng.gen_range(3_600..10 * 86_400));
            timelines[i].push((kind, actor, ts, None));
        }
        if i == 0 || !rng.gen_bool(params.reference_prob) {
            continue;
        }
        let cross = params.teams > 1 && rng.gen_bool(params.cross_team_bias);
        let candidates: Vec<usize> = (0..i).filter(|&j| (reviews[j].team != r.team) == cross).collect();
        let Some(&j) = candidates.choose(&mut rng) else {
            continue;
        };
        let actor = if rng.gen_bool(params.bot_fraction) {
            Actor::new(*BOTS.choose(&mut rng).expect("bots"), true)
        } else {
            Actor::new(member(r.team, rng.gen_range(0..MEMBERS_PER_TEAM)), false)
        };
        let ts = r.created_at + Duration::seconds(rng.gen_range(600..5 * 86_400));
        timelines[j].push((EventKind::Referenced, actor, ts, Some(r.id.clone())));
    }

    let mut events = Vec::new();
    for (r, mut timeline) in reviews.iter().zip(timelines) {
        timeline.sort_by_key(|(_, _, ts, _)| *ts);
        for (index, (kind, actor, timestamp, source_review)) in timeline.into_iter().enumerate() {
            events.push(ReviewEvent {
                event_id: format!("{}/timeline/{index}", r.id),
                kind,
                review: r.id.clone(),
                actor,
                timestamp,
                source_review,
            });
        }
    }

    let mut store = EventStore { pulls, events };
    store.pulls.sort_by(|a, b| a.review.cmp(&b.review));
    let order: std::collections::BTreeMap<&ReviewId, usize> =
        store.pulls.iter().enumerate().map(|(i, p)| (&p.review, i)).collect();
    let mut events = std::mem::take(&mut store.events);
    events.sort_by_key(|e| order[&e.review]);
    store.events = events;
    Ok(SynthData {
        store,
        snapshots: snapshots(params)?,
    })
}

/// Writes `pulls.jsonl` and `events.jsonl` into `out_dir` and the snapshot
/// files into `out_dir/snapshots`.
pub fn generate(params: &SynthParams, out_dir: &Path) -> Result<SynthOutput, SynthError> {
    generate_into(params, out_dir, &out_dir.join("snapshots"))
}

pub fn generate_into(params: &SynthParams, dump_dir: &Path, snapshot_dir: &Path) -> Result<SynthOutput, SynthError> {
    let data = generate_data(params)?;
    data.store.write_dump(dump_dir)?;
    for s in &data.snapshots {
        s.write(snapshot_dir)?;
    }
    Ok(SynthOutput {
        dump_dir: dump_dir.to_path_buf(),
        snapshot_dir: snapshot_dir.to_path_buf(),
        pulls: data.store.pulls.len(),
        events: data.store.events.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{map_files_to_components, owners_of};
    use std::collections::BTreeSet;

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let p = SynthParams {
            reviews: 80,
            ..SynthParams::default()
        };
        generate(&p, a.path()).unwrap();
        generate(&p, b.path()).unwrap();
        for f in ["pulls.jsonl", "events.jsonl", "snapshots/snapshot-2019-07-01.jsonl"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let other = generate_data(&SynthParams { seed: 7, ..p }).unwrap();
        assert_ne!(
            other.store,
            generate_data(&SynthParams {
                reviews: 80,
                ..SynthParams::default()
            })
            .unwrap()
            .store
        );
    }

    #[test]
    fn within_team_references_share_a_team() {
        let p = SynthParams {
            cross_team_bias: 0.0,
            reference_prob: 0.8,
            reviews: 150,
            ..SynthParams::default()
        };
        let data = generate_data(&p).unwrap();
        let snap = &data.snapshots[1];
        let teams_of = |r: &ReviewId| -> BTreeSet<String> {
            owners_of(&map_files_to_components(&data.store.pull(r).unwrap().files, snap), snap)
        };
        let refs: Vec<_> = data
            .store
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Referenced)
            .collect();
        assert!(refs.len() > 50);
        for e in refs {
            let a = teams_of(e.source_review.as_ref().unwrap());
            let b = teams_of(&e.review);
            assert!(
                a.intersection(&b).next().is_some(),
                "{} -> {}",
                e.source_review.as_ref().unwrap(),
                e.review
            );
        }
    }

    #[test]
    fn bot_share_tracks_parameter() {
        let p = SynthParams {
            bot_fraction: 0.5,
            reviews: 120,
            ..SynthParams::default()
        };
        let data = generate_data(&p).unwrap();
        assert!(data.store.events.len() >= 200);
        let bots = data.store.events[..200].iter().filter(|e| e.actor.is_bot).count();
        assert!((80..=120).contains(&bots), "{bots}");
    }

    #[test]
    fn output_passes_ingest_validation() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&SynthParams::default(), dir.path()).unwrap();
        let store = EventStore::load_dump(dir.path()).unwrap();
        assert_eq!((store.pulls.len(), store.events.len()), (out.pulls, out.events));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SynthParams {
            teams: 0,
            ..SynthParams::default()
        }
        .validate()
        .is_err());
        assert!(SynthParams {
            bot_fraction: 1.5,
            ..SynthParams::default()
        }
        .validate()
        .is_err());
    }
}
