//! Anonymization and output rendering.
//!
//! Everything written to disk goes through a [`Pseudonymizer`] first. The
//! graphics are hand-written SVG with fixed number formatting, so identical
//! inputs yield byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::catalog::{ComponentGraph, NO_TEAM, UNOWNED_COMPONENT, VIRTUAL_ROOT};
use crate::metrics::{Dimension, Ecdf, Summary};
use crate::model::{EnhancementMaps, ReviewId};
use crate::similarity::{Method, Similarity};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("anonymization salt must not be empty")]
    EmptySalt,
    #[error("nothing to plot")]
    NothingToPlot,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: malformed row {row}: {reason}", path.display())]
    MalformedRow { path: PathBuf, row: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdentityKind {
    User,
    Team,
    Component,
    Review,
}

impl IdentityKind {
    pub fn prefix(self) -> &'static str {
        match self {
            IdentityKind::User => "u_",
            IdentityKind::Team => "t_",
            IdentityKind::Component => "c_",
            IdentityKind::Review => "r_",
        }
    }
}

/// Keyed replacement of identities: `prefix + 12 hex chars` of
/// HMAC-SHA256(salt, prefix || identity).
#[derive(Clone)]
pub struct Pseudonymizer {
    salt: Vec<u8>,
}

impl std::fmt::Debug for Pseudonymizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Pseudonymizer { .. }")
    }
}

impl Pseudonymizer {
    pub fn new(salt: impl Into<Vec<u8>>) -> Result<Self, ReportError> {
        let salt = salt.into();
        if salt.is_empty() {
            return Err(ReportError::EmptySalt);
        }
        Ok(Pseudonymizer { salt })
    }

    pub fn pseudonym(&self, kind: IdentityKind, identity: &str) -> String {
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.salt).expect("HMAC accepts any key length");
        mac.update(kind.prefix().as_bytes());
        mac.update(identity.as_bytes());
        let digest = mac.finalize().into_bytes();
        format!("{}{}", kind.prefix(), &hex::encode(digest)[..12])
    }

    pub fn user(&self, login: &str) -> String {
        self.pseudonym(IdentityKind::User, login)
    }

    /// The no-team sentinel passes through unchanged.
    pub fn team(&self, team: &str) -> String {
        if team == NO_TEAM {
            team.to_string()
        } else {
            self.pseudonym(IdentityKind::Team, team)
        }
    }

    /// The virtual root and the unowned sentinel pass through unchanged.
    pub fn component(&self, component: &str) -> String {
        if component == VIRTUAL_ROOT || component == UNOWNED_COMPONENT {
            component.to_string()
        } else {
            self.pseudonym(IdentityKind::Component, component)
        }
    }

    pub fn review(&self, review: &ReviewId) -> String {
        self.pseudonym(IdentityKind::Review, &review.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnonymizedMaps {
    pub participants: BTreeMap<String, BTreeSet<String>>,
    pub components: BTreeMap<String, ComponentGraph>,
    pub teams: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymizedRecord {
    pub source: String,
    pub target: String,
    pub participants: Similarity,
    pub components: Similarity,
    pub teams: Similarity,
}

impl AnonymizedRecord {
    pub fn get(&self, dim: Dimension) -> &Similarity {
        match dim {
            Dimension::Participants => &self.participants,
            Dimension::Components => &self.components,
            Dimension::Teams => &self.teams,
        }
    }
}

pub fn anonymize_maps(maps: &EnhancementMaps, p: &Pseudonymizer) -> AnonymizedMaps {
    let sets = |m: &BTreeMap<ReviewId, BTreeSet<String>>, f: &dyn Fn(&str) -> String| {
        m.iter()
            .map(|(r, s)| (p.review(r), s.iter().map(|x| f(x)).collect()))
            .collect()
    };
    AnonymizedMaps {
        participants: sets(&maps.participants, &|u| p.user(u)),
        components: maps
            .components
            .iter()
            .map(|(r, g)| (p.review(r), g.map_labels(|l| p.component(l))))
            .collect(),
        teams: sets(&maps.teams, &|t| p.team(t)),
    }
}

/// Records with pseudonymous endpoints, sorted by `(source, target)`.
pub fn anonymize_records(records: &[crate::metrics::SimilarityRecord], p: &Pseudonymizer) -> Vec<AnonymizedRecord> {
    let mut out: Vec<_> = records
        .iter()
        .map(|r| AnonymizedRecord {
            source: p.review(&r.source),
            target: p.review(&r.target),
            participants: r.participants,
            components: r.components,
            teams: r.teams,
        })
        .collect();
    out.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    out
}

/// Everything the circular layout needs, already pseudonymous.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayoutData {
    pub component_owner: BTreeMap<String, String>,
    pub review_components: BTreeMap<String, BTreeSet<String>>,
    pub links: Vec<(String, String)>,
}

impl LayoutData {
    /// Builds pseudonymous layout data from raw per-review component sets and
    /// a component-to-team map.
    pub fn anonymized(
        links: impl IntoIterator<Item = (ReviewId, ReviewId)>,
        review_components: &BTreeMap<ReviewId, BTreeSet<String>>,
        component_owner: &BTreeMap<String, String>,
        p: &Pseudonymizer,
    ) -> Self {
        let mut links: Vec<_> = links.into_iter().map(|(s, t)| (p.review(&s), p.review(&t))).collect();
        links.sort();
        LayoutData {
            component_owner: component_owner
                .iter()
                .map(|(c, t)| (p.component(c), p.team(t)))
                .collect(),
            review_components: review_components
                .iter()
                .map(|(r, cs)| (p.review(r), cs.iter().map(|c| p.component(c)).collect()))
                .collect(),
            links,
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.into(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.into(),
        source,
    })
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn dimension_color(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Participants => "#d62728",
        Dimension::Components => "#2ca02c",
        Dimension::Teams => "#1f77b4",
    }
}

const CDF_WIDTH: f64 = 640.0;
const CDF_HEIGHT: f64 = 480.0;
const CDF_MARGIN: f64 = 60.0;

/// Builds the step-curve chart of the per-dimension ECDFs.
pub fn cdf_svg(ecdfs: &[(Dimension, Ecdf)]) -> Result<String, ReportError> {
    let curves: Vec<_> = ecdfs.iter().filter(|(_, e)| !e.is_empty()).collect();
    if curves.is_empty() {
        return Err(ReportError::NothingToPlot);
    }
    let plot_w = CDF_WIDTH - 2.0 * CDF_MARGIN;
    let plot_h = CDF_HEIGHT - 2.0 * CDF_MARGIN;
    let x = |v: f64| CDF_MARGIN + v * plot_w;
    let y = |p: f64| CDF_HEIGHT - CDF_MARGIN - p * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CDF_WIDTH}" height="{CDF_HEIGHT}" viewBox="0 0 {CDF_WIDTH} {CDF_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            x(t),
            y(0.0),
            x(t),
            y(1.0)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            x(0.0),
            y(t),
            x(1.0),
            y(t)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.2}</text>"#,
            x(t),
            y(0.0) + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{t:.2}</text>"#,
            x(0.0) - 6.0,
            y(t) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{:.2}" y="{:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#,
        x(0.0),
        y(1.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Similarity</text>"#,
        x(0.5),
        CDF_HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">Cumulative probability</text>"#,
        y(0.5),
        y(0.5)
    );

    for (dim, e) in &curves {
        let mut d = format!("M{:.2},{:.2}", x(0.0), y(0.0));
        let mut prob = 0.0;
        for &(v, p) in &e.points {
            let _ = write!(d, " H{:.2} V{:.2}", x(v), y(p));
            prob = p;
        }
        let _ = write!(d, " H{:.2}", x(1.0));
        debug_assert_eq!(prob, 1.0);
        let _ = writeln!(
            s,
            r#"<path class="ecdf" data-dimension="{dim}" d="{d}" fill="none" stroke="{}" stroke-width="2"/>"#,
            dimension_color(*dim)
        );
    }
    for (i, (dim, _)) in curves.iter().enumerate() {
        let ly = y(1.0) + 15.0 + 18.0 * i as f64;
        let lx = x(0.0) + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/>"#,
            lx + 20.0,
            dimension_color(*dim)
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{dim}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_cdf(ecdfs: &[(Dimension, Ecdf)], out_path: &Path) -> Result<(), ReportError> {
    write_file(out_path, &cdf_svg(ecdfs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircularStats {
    pub positions: usize,
    pub teams: usize,
    pub chords: usize,
}

/// A chord between two component positions, weighted by the lowest
/// component similarity among the links that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Chord {
    pub from: String,
    pub to: String,
    pub weight: Option<f64>,
}

/// Distinct `(source component, target component)` pairs over all links,
/// lowest weight first; pairs without a weight come last. Pairs of a
/// component with itself have no interior chord and are left out.
pub fn chords(layout: &LayoutData, weights: &BTreeMap<(String, String), f64>) -> Vec<Chord> {
    let mut pairs: BTreeMap<(String, String), Option<f64>> = BTreeMap::new();
    let none = BTreeSet::new();
    for (s, t) in &layout.links {
        let w = weights.get(&(s.clone(), t.clone())).copied();
        for a in layout.review_components.get(s).unwrap_or(&none) {
            for b in layout.review_components.get(t).unwrap_or(&none) {
                if a == b {
                    continue;
                }
                let entry = pairs.entry((a.clone(), b.clone())).or_insert(w);
                *entry = match (*entry, w) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                };
            }
        }
    }
    let mut out: Vec<Chord> = pairs
        .into_iter()
        .map(|((from, to), weight)| Chord { from, to, weight })
        .collect();
    out.sort_by(|a, b| {
        let wa = a.weight.unwrap_or(f64::INFINITY);
        let wb = b.weight.unwrap_or(f64::INFINITY);
        wa.total_cmp(&wb).then_with(|| (&a.from, &a.to).cmp(&(&b.from, &b.to)))
    });
    out
}

const CIRCLE_SIZE: f64 = 800.0;
const CIRCLE_RADIUS: f64 = 300.0;

/// Every owned component plus every component of a linked review sits on a
/// circle in contiguous per-team arcs; links become interior chords. At most `max_chords` chords are drawn, lowest weight first.
pub fn circular_svg(
    layout: &LayoutData,
    weights: &BTreeMap<(String, String), f64>,
    max_chords: Option<usize>,
) -> Result<(String, CircularStats), ReportError> {
    if layout.links.is_empty() {
        return Err(ReportError::NothingToPlot);
    }
    let linked: BTreeSet<&String> = layout.links.iter().flat_map(|(s, t)| [s, t]).collect();
    let placed = layout.component_owner.keys().chain(
        linked
            .into_iter()
            .flat_map(|r| layout.review_components.get(r).into_iter().flatten()),
    );
    let mut by_team: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for c in placed {
        let team = layout.component_owner.get(c).map(String::as_str).unwrap_or(NO_TEAM);
        by_team.entry(team).or_default().insert(c.as_str());
    }
    let positions: usize = by_team.values().map(BTreeSet::len).sum();
    let slots = positions + by_team.len();
    let center = CIRCLE_SIZE / 2.0;
    let point = |slot: f64, radius: f64| {
        let angle = 2.0 * PI * slot / slots.max(1) as f64 - PI / 2.0;
        (center + radius * angle.cos(), center + radius * angle.sin())
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CIRCLE_SIZE}" height="{CIRCLE_SIZE}" viewBox="0 0 {CIRCLE_SIZE} {CIRCLE_SIZE}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let mut slot_of: BTreeMap<&str, f64> = BTreeMap::new();
    let mut slot = 0.0;
    for (ti, (team, comps)) in by_team.iter().enumerate() {
        let first = slot;
        for c in comps {
            slot_of.insert(c, slot);
            slot += 1.0;
        }
        let last = slot - 1.0;
        let hue = (ti * 137) % 360;
        let arc_r = CIRCLE_RADIUS + 18.0;
        let (x0, y0) = point(first - 0.4, arc_r);
        let (x1, y1) = point(last + 0.4, arc_r);
        let large = if (last - first + 0.8) / slots as f64 > 0.5 {
            1
        } else {
            0
        };
        let _ = writeln!(
            s,
            r#"<path class="team-arc" data-team="{}" d="M{x0:.3},{y0:.3} A{arc_r:.3},{arc_r:.3} 0 {large} 1 {x1:.3},{y1:.3}" fill="none" stroke="hsl({hue},60%,45%)" stroke-width="8"/>"#,
            escape_xml(team)
        );
        let (lx, ly) = point((first + last) / 2.0, CIRCLE_RADIUS + 45.0);
        let _ = writeln!(
            s,
            r#"<text x="{lx:.3}" y="{ly:.3}" text-anchor="middle">{}</text>"#,
            escape_xml(team)
        );
        slot += 1.0;
    }

    let all = chords(layout, weights);
    let drawn = &all[..max_chords.unwrap_or(all.len()).min(all.len())];
    for chord in drawn {
        let (x0, y0) = point(slot_of[chord.from.as_str()], CIRCLE_RADIUS);
        let (x1, y1) = point(slot_of[chord.to.as_str()], CIRCLE_RADIUS);
        let _ = writeln!(
            s,
            r##"<path class="chord" d="M{x0:.3},{y0:.3} Q{center:.3},{center:.3} {x1:.3},{y1:.3}" fill="none" stroke="#555555" stroke-opacity="0.5"/>"##
        );
    }
    for (c, &sl) in &slot_of {
        let (x, y) = point(sl, CIRCLE_RADIUS);
        let _ = writeln!(
            s,
            r#"<circle class="component" data-component="{}" cx="{x:.3}" cy="{y:.3}" r="4" fill="black"/>"#,
            escape_xml(c)
        );
    }
    s.push_str("</svg>\n");
    let stats = CircularStats {
        positions,
        teams: by_team.len(),
        chords: drawn.len(),
    };
    Ok((s, stats))
}

pub fn render_circular(
    layout: &LayoutData,
    weights: &BTreeMap<(String, String), f64>,
    max_chords: Option<usize>,
    out_path: &Path,
) -> Result<CircularStats, ReportError> {
    let (svg, stats) = circular_svg(layout, weights, max_chords)?;
    write_file(out_path, &svg)?;
    Ok(stats)
}

pub const SIMILARITIES_HEADER: [&str; 9] = [
    "source",
    "target",
    "participants_sim",
    "participants_defined",
    "components_sim",
    "components_method",
    "components_defined",
    "teams_sim",
    "teams_defined",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "dimension",
    "count",
    "defined",
    "min",
    "p25",
    "median",
    "p75",
    "max",
    "mean",
];

pub const LINKED_RATIO_HEADER: [&str; 3] = ["reviews", "linked", "ratio"];

/// Six-decimal formatting used for every float in the CSV outputs.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ReportError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.into(),
            source,
        })?;
    }
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| ReportError::Csv {
            path: path.into(),
            source,
        })
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), ReportError> {
    let wrap = |source| ReportError::Csv {
        path: path.into(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.into(),
        source,
    })
}

fn sim_cell(s: &Similarity) -> String {
    s.get().map(fmt_float).unwrap_or_default()
}

pub fn export_similarities_csv(records: &[AnonymizedRecord], out_path: &Path) -> Result<(), ReportError> {
    write_rows(
        out_path,
        &SIMILARITIES_HEADER,
        records.iter().map(|r| {
            vec![
                r.source.clone(),
                r.target.clone(),
                sim_cell(&r.participants),
                r.participants.defined.to_string(),
                sim_cell(&r.components),
                r.components.method.to_string(),
                r.components.defined.to_string(),
                sim_cell(&r.teams),
                r.teams.defined.to_string(),
            ]
        }),
    )
}

pub fn export_summary_csv(summary: &Summary, out_path: &Path) -> Result<(), ReportError> {
    write_rows(
        out_path,
        &SUMMARY_HEADER,
        summary.rows.iter().map(|row| {
            let mut cells = vec![
                row.dimension.to_string(),
                row.count.to_string(),
                row.defined.to_string(),
            ];
            match row.stats {
                Some(q) => cells.extend([q.min, q.p25, q.median, q.p75, q.max, q.mean].map(fmt_float)),
                None => cells.extend(std::iter::repeat_n(String::new(), 6)),
            }
            cells
        }),
    )
}

pub fn export_linked_ratio_csv(summary: &Summary, out_path: &Path) -> Result<(), ReportError> {
    let rows = summary
        .linked_ratio
        .iter()
        .map(|l| vec![l.reviews.to_string(), l.linked.to_string(), fmt_float(l.ratio)]);
    write_rows(out_path, &LINKED_RATIO_HEADER, rows)
}

/// Parses a file written by [`export_similarities_csv`].
pub fn read_similarities_csv(path: &Path) -> Result<Vec<AnonymizedRecord>, ReportError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| ReportError::Csv {
        path: path.into(),
        source,
    })?;
    let headers = reader
        .headers()
        .map_err(|source| ReportError::Csv {
            path: path.into(),
            source,
        })?
        .clone();
    if headers.iter().ne(SIMILARITIES_HEADER) {
        return Err(ReportError::MalformedRow {
            path: path.into(),
            row: 0,
            reason: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|source| ReportError::Csv {
            path: path.into(),
            source,
        })?;
        let bad = |reason: &str| ReportError::MalformedRow {
            path: path.into(),
            row: i + 1,
            reason: reason.into(),
        };
        let flag = |cell: &str| cell.parse::<bool>().map_err(|_| bad("bad defined flag"));
        let sim = |value: &str, defined: bool, method: Method| -> Result<Similarity, ReportError> {
            if !defined {
                return Ok(Similarity::undefined(method));
            }
            let v: f64 = value.parse().map_err(|_| bad("bad similarity value"))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad("similarity out of range"));
            }
            Ok(Similarity::new(v, method))
        };
        let method = Method::parse(&row[5]).ok_or_else(|| bad("unknown method"))?;
        out.push(AnonymizedRecord {
            source: row[0].to_string(),
            target: row[1].to_string(),
            participants: sim(&row[2], flag(&row[3])?, Method::Jaccard)?,
            components: sim(&row[4], flag(&row[6])?, method)?,
            teams: sim(&row[7], flag(&row[8])?, Method::Jaccard)?,
        });
    }
    Ok(out)
}
