//! Set and tree similarity measures, both normalized to `[0, 1]`.

mod ged;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use ged::{
    edit_path_cost, ged, ged_approx, ged_exact, ged_similarity, teardown_cost, CostModel, GedResult,
    DEFAULT_EXACT_MAX_NODES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jaccard,
    GedExact,
    GedApprox,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Jaccard => "jaccard",
            Method::GedExact => "ged_exact",
            Method::GedApprox => "ged_approx",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jaccard" => Some(Method::Jaccard),
            "ged_exact" => Some(Method::GedExact),
            "ged_approx" => Some(Method::GedApprox),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A similarity value. `defined` is false when the dimension could not be
/// measured, in which case `value` carries no meaning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub value: f64,
    pub method: Method,
    pub defined: bool,
}

impl Similarity {
    pub fn new(value: f64, method: Method) -> Self {
        debug_assert!((0.0..=1.0).contains(&value), "similarity {value} out of range");
        Similarity {
            value,
            method,
            defined: true,
        }
    }

    pub fn undefined(method: Method) -> Self {
        Similarity {
            value: 0.0,
            method,
            defined: false,
        }
    }

    pub fn get(&self) -> Option<f64> {
        self.defined.then_some(self.value)
    }
}

/// `|A ∩ B| / |A ∪ B|`, with `J(∅, ∅) = 1`.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Similarity {
    let common = a.intersection(b).count();
    let union = a.len() + b.len() - common;
    if union == 0 {
        return Similarity::new(1.0, Method::Jaccard);
    }
    Similarity::new(common as f64 / union as f64, Method::Jaccard)
}
