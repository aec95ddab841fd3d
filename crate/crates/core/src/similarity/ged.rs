//! Graph edit distance between component trees.
//!
//! The exact search is A* over partial node assignments: nodes of the first
//! graph are decided one at a time (matched to an unused node of the second
//! graph or deleted), and the edge costs implied by each decision are charged
//! as soon as both endpoints are decided. Larger instances fall back to a
//! greedy assignment whose induced edit path is an upper bound.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Method, Similarity};
use crate::catalog::ComponentGraph;

/// Combined node count up to which the exact search runs.
pub const DEFAULT_EXACT_MAX_NODES: usize = 8;

/// Costs of the elementary edit operations. Substituting a node for one with
/// the same label is free; otherwise it costs `node_substitute`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub node_insert: f64,
    pub node_delete: f64,
    pub node_substitute: f64,
    pub edge_insert: f64,
    pub edge_delete: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::unit()
    }
}

impl CostModel {
    pub fn unit() -> Self {
        CostModel {
            node_insert: 1.0,
            node_delete: 1.0,
            node_substitute: 1.0,
            edge_insert: 1.0,
            edge_delete: 1.0,
        }
    }

    pub fn substitute(&self, a: &str, b: &str) -> f64 {
        if a == b {
            0.0
        } else {
            self.node_substitute
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.node_insert,
            self.node_delete,
            self.node_substitute,
            self.edge_insert,
            self.edge_delete,
        ]
        .iter()
        .all(|c| c.is_finite() && *c >= 0.0)
    }

    /// Stable identifier recorded alongside results.
    pub fn id(&self) -> String {
        if *self == CostModel::unit() {
            "unit".to_string()
        } else {
            format!(
                "ni={},nd={},ns={},ei={},ed={}",
                self.node_insert, self.node_delete, self.node_substitute, self.edge_insert, self.edge_delete
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GedResult {
    pub cost: f64,
    pub method: Method,
}

/// Exact search when the combined node count is at most `exact_max_nodes`,
/// greedy upper bound otherwise.
pub fn ged(g1: &ComponentGraph, g2: &ComponentGraph, costs: &CostModel, exact_max_nodes: usize) -> GedResult {
    if g1.node_count() + g2.node_count() <= exact_max_nodes {
        GedResult {
            cost: ged_exact(g1, g2, costs),
            method: Method::GedExact,
        }
    } else {
        GedResult {
            cost: ged_approx(g1, g2, costs),
            method: Method::GedApprox,
        }
    }
}

/// Cost of deleting all of `g1` and inserting all of `g2`.
pub fn teardown_cost(g1: &ComponentGraph, g2: &ComponentGraph, costs: &CostModel) -> f64 {
    g1.node_count() as f64 * costs.node_delete
        + g1.edge_count() as f64 * costs.edge_delete
        + g2.node_count() as f64 * costs.node_insert
        + g2.edge_count() as f64 * costs.edge_insert
}

/// `1 - GED / teardown`, and 1 when both graphs are empty.
pub fn ged_similarity(
    g1: &ComponentGraph,
    g2: &ComponentGraph,
    costs: &CostModel,
    exact_max_nodes: usize,
) -> Similarity {
    let result = ged(g1, g2, costs, exact_max_nodes);
    let denom = teardown_cost(g1, g2, costs);
    if denom == 0.0 {
        return Similarity::new(1.0, result.method);
    }
    Similarity::new((1.0 - result.cost / denom).clamp(0.0, 1.0), result.method)
}

/// Sentinel for "deleted" in an assignment.
const EPS: usize = usize::MAX;

/// Cost of the edit path induced by a complete assignment of `g1` nodes
/// (`None` = deleted) to distinct `g2` nodes.
pub fn edit_path_cost(g1: &ComponentGraph, g2: &ComponentGraph, costs: &CostModel, mapping: &[Option<usize>]) -> f64 {
    assert_eq!(mapping.len(), g1.node_count());
    let assignment: Vec<usize> = mapping.iter().map(|m| m.unwrap_or(EPS)).collect();
    let ctx = Context::new(g1, g2, costs);
    let mut used = vec![false; g2.node_count()];
    let mut cost = 0.0;
    for (k, &v) in assignment.iter().enumerate() {
        cost += ctx.step_cost(&assignment[..k], k, v);
        if v != EPS {
            assert!(!used[v], "mapping is not injective");
            used[v] = true;
        }
    }
    cost + ctx.completion_cost(&used)
}

struct Context<'a> {
    g1: &'a ComponentGraph,
    g2: &'a ComponentGraph,
    costs: &'a CostModel,
    /// For every g1 node k: g1 edges with at least one endpoint >= k.
    g1_open_edges: Vec<usize>,
    g2_edges: Vec<(usize, usize)>,
}

impl<'a> Context<'a> {
    fn new(g1: &'a ComponentGraph, g2: &'a ComponentGraph, costs: &'a CostModel) -> Self {
        let n1 = g1.node_count();
        let g1_open_edges = (0..=n1)
            .map(|k| g1.edges().filter(|&(p, c)| p >= k || c >= k).count())
            .collect();
        Context {
            g1,
            g2,
            costs,
            g1_open_edges,
            g2_edges: g2.edges().collect(),
        }
    }

    /// Node cost of deciding g1 node `k` as `v`, plus edge costs between `k`
    /// and every already-decided node.
    fn step_cost(&self, prefix: &[usize], k: usize, v: usize) -> f64 {
        let c = self.costs;
        let mut cost = if v == EPS {
            c.node_delete
        } else {
            c.substitute(self.g1.label(k), self.g2.label(v))
        };
        for (i, &w) in prefix.iter().enumerate() {
            for (a, b, x, y) in [(i, k, w, v), (k, i, v, w)] {
                let in_g1 = self.g1.has_edge(a, b);
                let in_g2 = x != EPS && y != EPS && self.g2.has_edge(x, y);
                match (in_g1, in_g2) {
                    (true, false) => cost += c.edge_delete,
                    (false, true) => cost += c.edge_insert,
                    _ => {}
                }
            }
        }
        cost
    }

    /// Inserting every unused g2 node and every g2 edge touching one.
    fn completion_cost(&self, used: &[bool]) -> f64 {
        let nodes = used.iter().filter(|u| !**u).count();
        let edges = self.g2_edges.iter().filter(|&&(p, c)| !used[p] || !used[c]).count();
        nodes as f64 * self.costs.node_insert + edges as f64 * self.costs.edge_insert
    }

    /// Admissible bound on the cost still to come once g1 nodes `0..k` are
    /// decided. Node and edge terms are bounded independently.
    fn lower_bound(&self, k: usize, used: &[bool]) -> f64 {
        let c = self.costs;
        let mut labels: HashMap<&str, isize> = HashMap::new();
        for node in k..self.g1.node_count() {
            *labels.entry(self.g1.label(node)).or_default() += 1;
        }
        let mut free2 = 0;
        let mut common = 0;
        for (node, _) in used.iter().enumerate().filter(|(_, u)| !**u) {
            free2 += 1;
            if let Some(n) = labels.get_mut(self.g2.label(node)) {
                if *n > 0 {
                    *n -= 1;
                    common += 1;
                }
            }
        }
        let left1 = self.g1.node_count() - k - common;
        let left2 = free2 - common;
        let paired = left1.min(left2);
        let node_lb = paired as f64 * c.node_substitute.min(c.node_delete + c.node_insert)
            + (left1 - paired) as f64 * c.node_delete
            + (left2 - paired) as f64 * c.node_insert;

        let open1 = self.g1_open_edges[k];
        let open2 = self.g2_edges.iter().filter(|&&(p, ch)| !used[p] || !used[ch]).count();
        let edge_lb = if open1 > open2 {
            (open1 - open2) as f64 * c.edge_delete
        } else {
            (open2 - open1) as f64 * c.edge_insert
        };
        node_lb + edge_lb
    }
}

struct State {
    f: f64,
    g: f64,
    assignment: Vec<usize>,
    complete: bool,
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for State {}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for State {
    // BinaryHeap is a max-heap: lowest f, then lexicographically smallest
    // assignment, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.assignment.cmp(&self.assignment))
            .then_with(|| self.complete.cmp(&other.complete))
    }
}

/// Exact graph edit distance by best-first search.
pub fn ged_exact(g1: &ComponentGraph, g2: &ComponentGraph, costs: &CostModel) -> f64 {
    let ctx = Context::new(g1, g2, costs);
    let n1 = g1.node_count();
    let n2 = g2.node_count();
    let mut heap = BinaryHeap::new();
    let none_used = vec![false; n2];
    heap.push(State {
        f: ctx.lower_bound(0, &none_used),
        g: 0.0,
        assignment: Vec::new(),
        complete: false,
    });

    while let Some(state) = heap.pop() {
        if state.complete {
            return state.g;
        }
        let k = state.assignment.len();
        let mut used = vec![false; n2];
        for &v in state.assignment.iter().filter(|&&v| v != EPS) {
            used[v] = true;
        }
        if k == n1 {
            let g = state.g + ctx.completion_cost(&used);
            heap.push(State {
                f: g,
                g,
                assignment: state.assignment,
                complete: true,
            });
            continue;
        }
        let options: Vec<usize> = (0..n2).filter(|&v| !used[v]).chain(std::iter::once(EPS)).collect();
        for v in options {
            let g = state.g + ctx.step_cost(&state.assignment, k, v);
            if v != EPS {
                used[v] = true;
            }
            let h = ctx.lower_bound(k + 1, &used);
            if v != EPS {
                used[v] = false;
            }
            let mut assignment = state.assignment.clone();
            assignment.push(v);
            heap.push(State {
                f: g + h,
                g,
                assignment,
                complete: false,
            });
        }
    }
    unreachable!("search space always contains a complete assignment")
}

/// Upper bound from a greedy assignment: each g1 node in turn takes the
/// cheapest option given the decisions so far. Never exceeds the teardown
/// cost.
pub fn ged_approx(g1: &ComponentGraph, g2: &ComponentGraph, costs: &CostModel) -> f64 {
    let ctx = Context::new(g1, g2, costs);
    let n2 = g2.node_count();
    let mut used = vec![false; n2];
    let mut assignment = Vec::with_capacity(g1.node_count());
    let mut cost = 0.0;
    for k in 0..g1.node_count() {
        let (best, step) = (0..n2)
            .filter(|&v| !used[v])
            .chain(std::iter::once(EPS))
            .map(|v| (v, ctx.step_cost(&assignment, k, v)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("deletion is always an option");
        if best != EPS {
            used[best] = true;
        }
        assignment.push(best);
        cost += step;
    }
    (cost + ctx.completion_cost(&used)).min(teardown_cost(g1, g2, costs))
}
