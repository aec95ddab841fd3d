//! Per-link similarity records and their distributions.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{linked_ratio, CodeReviewNetwork, EnhancementMaps, ModelError, ReviewId};
use crate::similarity::{ged_similarity, jaccard, CostModel, Method, Similarity};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("value {0} is not a finite number in [0, 1]")]
    OutOfRange(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Participants,
    Components,
    Teams,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Participants, Dimension::Components, Dimension::Teams];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Participants => "participants",
            Dimension::Components => "components",
            Dimension::Teams => "teams",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub source: ReviewId,
    pub target: ReviewId,
    pub participants: Similarity,
    pub components: Similarity,
    pub teams: Similarity,
}

impl SimilarityRecord {
    pub fn get(&self, dim: Dimension) -> &Similarity {
        match dim {
            Dimension::Participants => &self.participants,
            Dimension::Components => &self.components,
            Dimension::Teams => &self.teams,
        }
    }
}

fn set_similarity(
    a: &ReviewId,
    b: &ReviewId,
    map: &std::collections::BTreeMap<ReviewId, BTreeSet<String>>,
) -> Similarity {
    match (map.get(a), map.get(b)) {
        (Some(x), Some(y)) => jaccard(x, y),
        _ => Similarity::undefined(Method::Jaccard),
    }
}

fn record_for(
    source: &ReviewId,
    target: &ReviewId,
    maps: &EnhancementMaps,
    costs: &CostModel,
    exact_max_nodes: usize,
) -> SimilarityRecord {
    let components = match (maps.components.get(source), maps.components.get(target)) {
        (Some(x), Some(y)) => ged_similarity(x, y, costs, exact_max_nodes),
        _ => Similarity::undefined(Method::GedExact),
    };
    SimilarityRecord {
        source: source.clone(),
        target: target.clone(),
        participants: set_similarity(source, target, &maps.participants),
        components,
        teams: set_similarity(source, target, &maps.teams),
    }
}

/// One record per network edge, in canonical `(source, target)` order.
///
/// A dimension whose data is missing for either endpoint is marked
/// undefined.
pub fn edge_similarities(
    network: &CodeReviewNetwork,
    maps: &EnhancementMaps,
    costs: &CostModel,
    exact_max_nodes: usize,
) -> Vec<SimilarityRecord> {
    let edges: Vec<_> = network.edges().collect();
    edges
        .par_iter()
        .map(|e| record_for(&e.source, &e.target, maps, costs, exact_max_nodes))
        .collect()
}

/// [`edge_similarities`] on a dedicated pool of `parallelism` threads.
pub fn edge_similarities_with_parallelism(
    network: &CodeReviewNetwork,
    maps: &EnhancementMaps,
    costs: &CostModel,
    exact_max_nodes: usize,
    parallelism: usize,
) -> Vec<SimilarityRecord> {
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build() {
        Ok(pool) => pool.install(|| edge_similarities(network, maps, costs, exact_max_nodes)),
        Err(_) => network
            .edges()
            .map(|e| record_for(&e.source, &e.target, maps, costs, exact_max_nodes))
            .collect(),
    }
}

/// Undefined-record counts per dimension.
pub fn skip_counts(records: &[SimilarityRecord]) -> [(Dimension, usize); 3] {
    Dimension::ALL.map(|d| (d, records.iter().filter(|r| !r.get(d).defined).count()))
}

/// Right-continuous empirical CDF over distinct values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    pub points: Vec<(f64, f64)>,
}

impl Ecdf {
    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|&(v, _)| v <= x) {
            0 => 0.0,
            i => self.points[i - 1].1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn ecdf(values: &[f64]) -> Result<Ecdf, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyDistribution);
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite() || !(0.0..=1.0).contains(*v)) {
        return Err(MetricsError::OutOfRange(bad));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, v) in sorted.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *v => last.1 = p,
            _ => points.push((*v, p)),
        }
    }
    // the last count is n/n
    if let Some(last) = points.last_mut() {
        last.1 = 1.0;
    }
    Ok(Ecdf { points })
}

/// Defined values of one dimension, in record order.
pub fn dimension_values(records: &[SimilarityRecord], dim: Dimension) -> Vec<f64> {
    records.iter().filter_map(|r| r.get(dim).get()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkedRatio {
    pub reviews: usize,
    pub linked: usize,
    pub ratio: f64,
}

impl LinkedRatio {
    pub fn measure(network: &CodeReviewNetwork, all_reviews: &BTreeSet<ReviewId>) -> Result<Self, MetricsError> {
        let ratio = linked_ratio(network, all_reviews)?;
        let linked = network.linked_reviews().len();
        Ok(LinkedRatio {
            reviews: all_reviews.len(),
            linked,
            ratio,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dimension: Dimension,
    pub count: usize,
    pub defined: usize,
    /// `None` flags a dimension with no defined value.
    pub stats: Option<Quantiles>,
}

impl SummaryRow {
    pub fn all_undefined(&self) -> bool {
        self.stats.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub linked_ratio: Option<LinkedRatio>,
}

/// Nearest-rank quantile of an ascending slice: the value at rank
/// `ceil(p * n)`, clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn quantiles(values: &[f64]) -> Option<Quantiles> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Some(Quantiles {
        min: sorted[0],
        p25: nearest_rank(&sorted, 0.25),
        median: nearest_rank(&sorted, 0.5),
        p75: nearest_rank(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean,
    })
}

pub fn summarize(records: &[SimilarityRecord], linked_ratio: Option<LinkedRatio>) -> Summary {
    let rows = Dimension::ALL
        .iter()
        .map(|&dim| {
            let values = dimension_values(records, dim);
            SummaryRow {
                dimension: dim,
                count: records.len(),
                defined: values.len(),
                stats: quantiles(&values),
            }
        })
        .collect();
    Summary { rows, linked_ratio }
}
