//! The measure and report stages, independent of argument parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::catalog::{
    component_graph_of, map_files_to_components, owners_of, snapshot_file_name, SnapshotArchive, NO_TEAM,
};
use crate::ingest::{
    self, extract_references, filter_events, group_participants, synthesize_creation_events, EventStore,
};
use crate::metrics::{
    ecdf, edge_similarities_with_parallelism, skip_counts, summarize, Dimension, LinkedRatio, SimilarityRecord, Summary,
};
use crate::model::{build_network_with_reviews, CodeReviewNetwork, EnhancementMaps, ReviewId};
use crate::report::{self, LayoutData, Pseudonymizer};
use crate::similarity::CostModel;

pub const SIMILARITIES_FILE: &str = "similarities.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const LINKED_RATIO_FILE: &str = "linked_ratio.csv";
pub const LAYOUT_FILE: &str = "layout.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const CDF_FILE: &str = "cdf.svg";
pub const CIRCULAR_FILE: &str = "circular.svg";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSettings {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub exclude_bots: bool,
    pub ged_exact_max_nodes: usize,
    pub cost_model: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureCounts {
    pub pulls: usize,
    pub events: usize,
    pub retained_events: usize,
    pub references: usize,
    pub unresolved_references: usize,
    pub self_references: usize,
    pub reviews: usize,
    pub linked_reviews: usize,
    pub edges: usize,
    pub linked_reviews_without_files: usize,
    pub unowned_files: usize,
    pub snapshots_used: Vec<NaiveDate>,
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub network: CodeReviewNetwork,
    pub all_reviews: BTreeSet<ReviewId>,
    pub maps: EnhancementMaps,
    pub records: Vec<SimilarityRecord>,
    pub summary: Summary,
    pub review_components: BTreeMap<ReviewId, BTreeSet<String>>,
    pub component_owner: BTreeMap<String, String>,
    pub counts: MeasureCounts,
}

pub struct MeasureOptions {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub exclude_bots: bool,
    pub costs: CostModel,
    pub exact_max_nodes: usize,
    pub parallelism: usize,
}

impl MeasureOptions {
    pub fn settings(&self) -> MeasureSettings {
        MeasureSettings {
            from: self.from,
            to: self.to,
            exclude_bots: self.exclude_bots,
            ged_exact_max_nodes: self.exact_max_nodes,
            cost_model: self.costs.id(),
        }
    }
}

fn input_error(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

/// Runs filtering, network construction, enhancement and similarity
/// measurement over a loaded dump.
pub fn measure(store: &EventStore, archive: &SnapshotArchive, opts: &MeasureOptions) -> Result<Measurement, CliError> {
    let mut counts = MeasureCounts {
        pulls: store.pulls.len(),
        events: store.events.len(),
        ..Default::default()
    };
    let mut events = store.events.clone();
    events.extend(synthesize_creation_events(&store.pulls));
    let retained =
        filter_events(&events, opts.from, opts.to, opts.exclude_bots).map_err(|e| CliError::Config(e.to_string()))?;
    counts.retained_events = retained.len();

    let known = store.review_ids();
    let refs = extract_references(&retained, &known);
    counts.references = refs.events.len();
    counts.unresolved_references = refs.unresolved;
    counts.self_references = refs.self_references;

    let mut all_reviews: BTreeSet<ReviewId> = retained
        .iter()
        .map(|e| &e.review)
        .filter(|r| known.contains(*r))
        .cloned()
        .collect();
    all_reviews.extend(refs.events.iter().filter_map(|e| e.source_review.clone()));
    if all_reviews.is_empty() {
        return Err(CliError::EmptyDomain(format!(
            "no reviews with activity between {} and {}",
            opts.from, opts.to
        )));
    }
    let network = build_network_with_reviews(&refs.events, &all_reviews).map_err(input_error)?;
    counts.reviews = all_reviews.len();
    counts.edges = network.edge_count();

    let participants = group_participants(&retained)
        .into_iter()
        .filter(|(r, _)| network.reviews().contains(r))
        .collect();
    let mut maps = EnhancementMaps {
        participants,
        ..Default::default()
    };

    let earliest = network.earliest_incident_reference();
    counts.linked_reviews = earliest.len();
    if let Some(first) = earliest.values().map(|ts| ts.date_naive()).min() {
        if archive.resolve(first).is_none() {
            return Err(CliError::Input(format!(
                "no component snapshot on or before {first}, the earliest date a linked review needs"
            )));
        }
    }

    let mut review_components = BTreeMap::new();
    let mut component_owner = BTreeMap::new();
    let mut used = BTreeSet::new();
    for (review, ts) in &earliest {
        let files = store.pull(review).map(|p| p.files.as_slice()).unwrap_or_default();
        if files.is_empty() {
            counts.linked_reviews_without_files += 1;
            continue;
        }
        let snapshot = archive.load(ts.date_naive()).map_err(input_error)?;
        used.insert(snapshot.date);
        counts.unowned_files += files.iter().filter(|f| snapshot.component_of(f).is_none()).count();
        let components = map_files_to_components(files, &snapshot);
        for c in &components {
            component_owner.insert(c.clone(), snapshot.owner(c).unwrap_or(NO_TEAM).to_string());
        }
        maps.components.insert(
            review.clone(),
            component_graph_of(&components, &snapshot).map_err(input_error)?,
        );
        maps.teams.insert(review.clone(), owners_of(&components, &snapshot));
        review_components.insert(review.clone(), components);
    }
    counts.snapshots_used = used.into_iter().collect();

    let records =
        edge_similarities_with_parallelism(&network, &maps, &opts.costs, opts.exact_max_nodes, opts.parallelism);
    let linked = LinkedRatio::measure(&network, &all_reviews).map_err(input_error)?;
    let summary = summarize(&records, Some(linked));
    Ok(Measurement {
        network,
        all_reviews,
        maps,
        records,
        summary,
        review_components,
        component_owner,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub settings: MeasureSettings,
    pub input_digest: String,
    pub decisions: BTreeMap<String, String>,
    pub counts: MeasureCounts,
    pub undefined: BTreeMap<String, usize>,
    pub components_method: BTreeMap<String, usize>,
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the dump files and every snapshot file, in a fixed order.
pub fn input_digest(dump_dir: &Path, archive: &SnapshotArchive, snapshot_dir: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    let mut files: Vec<(String, PathBuf)> = [ingest::PULLS_FILE, ingest::EVENTS_FILE]
        .iter()
        .map(|f| (f.to_string(), dump_dir.join(f)))
        .collect();
    files.extend(
        archive
            .dates()
            .map(|d| (snapshot_file_name(d), snapshot_dir.join(snapshot_file_name(d)))),
    );
    for (name, path) in files {
        let bytes = std::fs::read(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Identifies everything that determines the measure outputs. The salt
/// enters only through its digest.
pub fn config_hash(settings: &MeasureSettings, input_digest: &str, salt: &[u8]) -> String {
    let canonical = serde_json::json!({
        "settings": settings,
        "input_digest": input_digest,
        "salt_digest": hex_digest(salt),
    });
    hex_digest(canonical.to_string().as_bytes())
}

fn decisions() -> BTreeMap<String, String> {
    [
        (
            "reference_scope",
            "pull request to pull request, self references dropped",
        ),
        ("duplicate_edges", "kept once with the earliest timestamp"),
        (
            "snapshot_rule",
            "earliest incident reference date, nearest earlier snapshot",
        ),
        ("similarity_scope", "pairwise per edge"),
        ("empty_sets_jaccard", "1"),
        ("ged_normalization", "1 - ged / teardown cost"),
        ("quantiles", "nearest rank"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

pub fn build_metadata(m: &Measurement, settings: MeasureSettings, input_digest: String, salt: &[u8]) -> Metadata {
    let mut components_method = BTreeMap::new();
    for r in m.records.iter().filter(|r| r.components.defined) {
        *components_method
            .entry(r.components.method.as_str().to_string())
            .or_insert(0) += 1;
    }
    Metadata {
        config_hash: config_hash(&settings, &input_digest, salt),
        settings,
        input_digest,
        decisions: decisions(),
        counts: m.counts.clone(),
        undefined: skip_counts(&m.records)
            .iter()
            .map(|(d, n)| (d.as_str().to_string(), *n))
            .collect(),
        components_method,
    }
}

fn read_config_hash(path: &Path) -> Result<Option<String>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(value.get("config_hash").and_then(|h| h.as_str()).map(str::to_string))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(input_error)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes the pseudonymous measure outputs. An output directory already
/// holding results of a different configuration is left untouched.
pub fn write_measurement(m: &Measurement, meta: &Metadata, p: &Pseudonymizer, out: &Path) -> Result<(), CliError> {
    if let Some(existing) = read_config_hash(&out.join(METADATA_FILE))? {
        if existing != meta.config_hash {
            return Err(CliError::Config(format!(
                "{} holds results of a different configuration ({existing}); choose another --out",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let records = report::anonymize_records(&m.records, p);
    report::export_similarities_csv(&records, &out.join(SIMILARITIES_FILE)).map_err(input_error)?;
    report::export_summary_csv(&m.summary, &out.join(SUMMARY_FILE)).map_err(input_error)?;
    report::export_linked_ratio_csv(&m.summary, &out.join(LINKED_RATIO_FILE)).map_err(input_error)?;
    let links = m.network.edges().map(|e| (e.source, e.target));
    let layout = LayoutData::anonymized(links, &m.review_components, &m.component_owner, p);
    write_json(&out.join(LAYOUT_FILE), &layout)?;
    write_json(&out.join(METADATA_FILE), meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub max_chords: Option<usize>,
    pub dimensions_plotted: Vec<Dimension>,
    pub positions: usize,
    pub teams: usize,
    pub chords: usize,
}

/// Renders the CDF chart and the circular layout from measure outputs in
/// `out`.
pub fn render_report(out: &Path, max_chords: Option<usize>) -> Result<ReportMetadata, CliError> {
    let require = |name: &str| {
        let path = out.join(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(CliError::Input(format!("file not found: {}", path.display())))
        }
    };
    let meta_path = require(METADATA_FILE)?;
    let sims_path = require(SIMILARITIES_FILE)?;
    let layout_path = require(LAYOUT_FILE)?;
    let config_hash = read_config_hash(&meta_path)?
        .ok_or_else(|| CliError::Input(format!("{}: no config_hash", meta_path.display())))?;

    let records = report::read_similarities_csv(&sims_path).map_err(input_error)?;
    let mut ecdfs = Vec::new();
    for dim in Dimension::ALL {
        let values: Vec<f64> = records.iter().filter_map(|r| r.get(dim).get()).collect();
        if let Ok(e) = ecdf(&values) {
            ecdfs.push((dim, e));
        }
    }
    if ecdfs.is_empty() {
        return Err(CliError::EmptyDomain(
            "nothing to plot: no defined similarity values".into(),
        ));
    }
    report::render_cdf(&ecdfs, &out.join(CDF_FILE)).map_err(input_error)?;

    let layout_text = std::fs::read_to_string(&layout_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", layout_path.display())))?;
    let layout: LayoutData =
        serde_json::from_str(&layout_text).map_err(|e| CliError::Input(format!("{}: {e}", layout_path.display())))?;
    let weights: BTreeMap<(String, String), f64> = records
        .iter()
        .filter_map(|r| r.components.get().map(|v| ((r.source.clone(), r.target.clone()), v)))
        .collect();
    let stats =
        report::render_circular(&layout, &weights, max_chords, &out.join(CIRCULAR_FILE)).map_err(|e| match e {
            report::ReportError::NothingToPlot => CliError::EmptyDomain("nothing to plot: no links".into()),
            other => input_error(other),
        })?;
    let meta = ReportMetadata {
        config_hash,
        max_chords,
        dimensions_plotted: ecdfs.iter().map(|(d, _)| *d).collect(),
        positions: stats.positions,
        teams: stats.teams,
        chords: stats.chords,
    };
    write_json(&out.join(REPORT_FILE), &meta)?;
    Ok(meta)
}
