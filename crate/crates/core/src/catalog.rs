//! Component catalog: dated ownership snapshots, file-to-component mapping
//! and per-review component trees.
//!
//! Components are folders. A component's parent is the nearest other
//! component whose path is a segment prefix of it; top-level components hang
//! off a virtual root.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, normalize_path, IngestError};

pub const VIRTUAL_ROOT: &str = "/";
pub const UNOWNED_COMPONENT: &str = "__unowned__";
pub const NO_TEAM: &str = "__no_team__";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("no component snapshot on or before {0}")]
    MissingSnapshot(NaiveDate),
    #[error("duplicate component {path:?} in snapshot {date}")]
    DuplicateComponent { date: NaiveDate, path: String },
    #[error("component {0:?} is not part of the snapshot")]
    UnknownComponent(String),
    #[error("duplicate label {0:?} in component graph")]
    DuplicateLabel(String),
    #[error("node {0} does not exist")]
    NoSuchNode(usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub component: String,
    pub owner: String,
}

/// Trie over `/`-separated path segments.
///
/// Nodes can be flagged as a component root (carrying the index of its
/// snapshot entry) and as a file leaf.
#[derive(Debug, Clone)]
pub struct PathTrie {
    nodes: Vec<TrieNode>,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<String, usize>,
    component: Option<usize>,
    file: bool,
}

impl Default for PathTrie {
    fn default() -> Self {
        PathTrie {
            nodes: vec![TrieNode::default()],
        }
    }
}

impl PathTrie {
    fn insert(&mut self, path: &str) -> usize {
        let mut at = 0;
        for seg in path.split('/') {
            at = match self.nodes[at].children.get(seg) {
                Some(&child) => child,
                None => {
                    self.nodes.push(TrieNode::default());
                    let id = self.nodes.len() - 1;
                    self.nodes[at].children.insert(seg.to_string(), id);
                    id
                }
            };
        }
        at
    }

    pub fn insert_component(&mut self, path: &str, entry: usize) {
        let node = self.insert(path);
        self.nodes[node].component = Some(entry);
    }

    pub fn insert_file(&mut self, path: &str) {
        let node = self.insert(path);
        self.nodes[node].file = true;
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Component entries on the path to `path`, outermost first, excluding a
    /// component sitting exactly at `path`.
    fn enclosing_components(&self, path: &str) -> Vec<usize> {
        let segments: Vec<&str> = path.split('/').collect();
        let mut out = Vec::new();
        let mut at = 0;
        for seg in &segments[..segments.len() - 1] {
            match self.nodes[at].children.get(*seg) {
                Some(&child) => at = child,
                None => break,
            }
            if let Some(entry) = self.nodes[at].component {
                out.push(entry);
            }
        }
        out
    }

    /// Walks `files` and `self` in lockstep. For each file leaf, reports the
    /// deepest component passed on its way down (the leaves of the
    /// intersection of both tries).
    fn intersect_leaves(&self, files: &PathTrie, mut visit: impl FnMut(Option<usize>)) {
        // (file node, component node if still inside the component trie, deepest component)
        let mut stack = vec![(0usize, Some(0usize), None::<usize>)];
        while let Some((f, c, deepest)) = stack.pop() {
            let fnode = &files.nodes[f];
            if fnode.file {
                visit(deepest);
            }
            for (seg, &fchild) in fnode.children.iter().rev() {
                let cchild = c.and_then(|c| self.nodes[c].children.get(seg).copied());
                // A component only contains what lies strictly below it, so
                // the deepest match is taken from the parent side.
                let parent_component = c.and_then(|c| self.nodes[c].component);
                let inherited = parent_component.or(deepest);
                stack.push((fchild, cchild, inherited));
            }
        }
    }
}

/// Component ownership valid on one day.
#[derive(Debug, Clone)]
pub struct ComponentSnapshot {
    pub date: NaiveDate,
    pub entries: Vec<SnapshotEntry>,
    index: BTreeMap<String, usize>,
    trie: PathTrie,
}

impl ComponentSnapshot {
    pub fn new(date: NaiveDate, entries: Vec<SnapshotEntry>) -> Result<Self, CatalogError> {
        let mut normalized = Vec::with_capacity(entries.len());
        let mut index = BTreeMap::new();
        let mut trie = PathTrie::default();
        for entry in entries {
            let component = normalize_path(&entry.component)?;
            if index.insert(component.clone(), normalized.len()).is_some() {
                return Err(CatalogError::DuplicateComponent { date, path: component });
            }
            trie.insert_component(&component, normalized.len());
            normalized.push(SnapshotEntry {
                component,
                owner: entry.owner,
            });
        }
        Ok(ComponentSnapshot {
            date,
            entries: normalized,
            index,
            trie,
        })
    }

    pub fn contains(&self, component: &str) -> bool {
        self.index.contains_key(component)
    }

    pub fn owner(&self, component: &str) -> Option<&str> {
        self.index.get(component).map(|&i| self.entries[i].owner.as_str())
    }

    /// Deepest component strictly containing `file`.
    pub fn component_of(&self, file: &str) -> Option<&str> {
        self.trie
            .enclosing_components(file)
            .last()
            .map(|&i| self.entries[i].component.as_str())
    }

    /// Nearest enclosing component of `component`, if any.
    pub fn parent_of(&self, component: &str) -> Option<&str> {
        self.component_of(component)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CatalogError> {
        std::fs::create_dir_all(dir).map_err(|source| CatalogError::Io {
            path: dir.into(),
            source,
        })?;
        let path = dir.join(snapshot_file_name(self.date));
        ingest::write_jsonl(&path, &self.entries)?;
        Ok(path)
    }
}

pub fn snapshot_file_name(date: NaiveDate) -> String {
    format!("snapshot-{}.jsonl", date.format("%Y-%m-%d"))
}

fn parse_snapshot_file_name(name: &str) -> Option<NaiveDate> {
    let stem = name.strip_prefix("snapshot-")?.strip_suffix(".jsonl")?;
    if stem.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(stem, "%Y-%m-%d").ok()
}

/// Directory of dated snapshot files with a load cache.
#[derive(Debug)]
pub struct SnapshotArchive {
    dir: PathBuf,
    dates: BTreeSet<NaiveDate>,
    cache: Mutex<BTreeMap<NaiveDate, Arc<ComponentSnapshot>>>,
}

impl SnapshotArchive {
    pub fn open(dir: &Path) -> Result<Self, CatalogError> {
        let io = |source| CatalogError::Io {
            path: dir.into(),
            source,
        };
        let mut dates = BTreeSet::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let entry = entry.map_err(io)?;
            if let Some(date) = entry.file_name().to_str().and_then(parse_snapshot_file_name) {
                dates.insert(date);
            }
        }
        Ok(SnapshotArchive {
            dir: dir.into(),
            dates,
            cache: Mutex::default(),
        })
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.dates.iter().copied()
    }

    /// The snapshot date used for `date`: that day, else the nearest earlier.
    pub fn resolve(&self, date: NaiveDate) -> Option<NaiveDate> {
        self.dates.range(..=date).next_back().copied()
    }

    pub fn load(&self, date: NaiveDate) -> Result<Arc<ComponentSnapshot>, CatalogError> {
        let day = self.resolve(date).ok_or(CatalogError::MissingSnapshot(date))?;
        if let Some(s) = self.cache.lock().expect("snapshot cache").get(&day) {
            return Ok(Arc::clone(s));
        }
        let entries = ingest::read_jsonl(&self.dir.join(snapshot_file_name(day)))?;
        let snapshot = Arc::new(ComponentSnapshot::new(day, entries)?);
        self.cache
            .lock()
            .expect("snapshot cache")
            .insert(day, Arc::clone(&snapshot));
        Ok(snapshot)
    }
}

/// Loads the snapshot for `date`, falling back to the nearest earlier day.
pub fn load_snapshot(snapshot_dir: &Path, date: NaiveDate) -> Result<ComponentSnapshot, CatalogError> {
    let archive = SnapshotArchive::open(snapshot_dir)?;
    let snapshot = archive.load(date)?;
    Ok((*snapshot).clone())
}

/// Maps each file to its deepest enclosing component. Files outside every
/// component map to [`UNOWNED_COMPONENT`].
pub fn map_files_to_components<S: AsRef<str>>(files: &[S], snapshot: &ComponentSnapshot) -> BTreeSet<String> {
    let mut file_trie = PathTrie::default();
    for f in files {
        file_trie.insert_file(f.as_ref());
    }
    let mut out = BTreeSet::new();
    snapshot.trie.intersect_leaves(&file_trie, |deepest| {
        let label = match deepest {
            Some(i) => snapshot.entries[i].component.as_str(),
            None => UNOWNED_COMPONENT,
        };
        out.insert(label.to_string());
    });
    out
}

/// Owning teams of `components`; the unowned sentinel maps to [`NO_TEAM`].
pub fn owners_of(components: &BTreeSet<String>, snapshot: &ComponentSnapshot) -> BTreeSet<String> {
    components
        .iter()
        .map(|c| snapshot.owner(c).unwrap_or(NO_TEAM).to_string())
        .collect()
}

/// Rooted tree with unique labels, stored as a parent array. Node 0 is the
/// root when the tree is nonempty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentGraph {
    labels: Vec<String>,
    parents: Vec<Option<usize>>,
}

impl ComponentGraph {
    /// A graph with no nodes at all.
    pub fn empty() -> Self {
        ComponentGraph::default()
    }

    pub fn with_root(label: impl Into<String>) -> Self {
        ComponentGraph {
            labels: vec![label.into()],
            parents: vec![None],
        }
    }

    pub fn add_child(&mut self, parent: usize, label: impl Into<String>) -> Result<usize, CatalogError> {
        let label = label.into();
        if parent >= self.labels.len() {
            return Err(CatalogError::NoSuchNode(parent));
        }
        if self.labels.contains(&label) {
            return Err(CatalogError::DuplicateLabel(label));
        }
        self.labels.push(label);
        self.parents.push(Some(parent));
        Ok(self.labels.len() - 1)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().filter(|p| p.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    /// `(parent, child)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents.iter().enumerate().filter_map(|(c, p)| p.map(|p| (p, c)))
    }

    pub fn has_edge(&self, parent: usize, child: usize) -> bool {
        self.parents.get(child).copied().flatten() == Some(parent)
    }

    pub fn depth(&self) -> usize {
        (0..self.labels.len())
            .map(|mut n| {
                let mut d = 1;
                while let Some(p) = self.parents[n] {
                    n = p;
                    d += 1;
                }
                d
            })
            .max()
            .unwrap_or(0)
    }

    /// Same shape with every label passed through `f`.
    pub fn map_labels(&self, mut f: impl FnMut(&str) -> String) -> Self {
        ComponentGraph {
            labels: self.labels.iter().map(|l| f(l)).collect(),
            parents: self.parents.clone(),
        }
    }
}

/// Minimal subtree of the snapshot hierarchy spanning the virtual root and
/// every given component.
pub fn component_graph_of(
    components: &BTreeSet<String>,
    snapshot: &ComponentSnapshot,
) -> Result<ComponentGraph, CatalogError> {
    let mut needed = BTreeSet::new();
    for c in components {
        if c == UNOWNED_COMPONENT {
            needed.insert(c.clone());
            continue;
        }
        if !snapshot.contains(c) {
            return Err(CatalogError::UnknownComponent(c.clone()));
        }
        needed.insert(c.clone());
        for i in snapshot.trie.enclosing_components(c) {
            needed.insert(snapshot.entries[i].component.clone());
        }
    }
    let mut graph = ComponentGraph::with_root(VIRTUAL_ROOT);
    let mut node_of: BTreeMap<&str, usize> = BTreeMap::new();
    // Ancestors sort before their descendants, so parents exist on insertion.
    for label in &needed {
        let parent = match label.as_str() {
            UNOWNED_COMPONENT => 0,
            l => snapshot.parent_of(l).map(|p| node_of[p]).unwrap_or(0),
        };
        let node = graph.add_child(parent, label.clone())?;
        node_of.insert(label, node);
    }
    Ok(graph)
}
