mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    brute_force_ged, induced_cost, jaccard_by_counting, longest_prefix_scan, random_mapping_instance, random_tree,
    sized_tree,
};
use reviewnet::catalog::{map_files_to_components, ComponentGraph, ComponentSnapshot};
use reviewnet::similarity::{edit_path_cost, ged_approx, ged_exact, ged_similarity, jaccard, teardown_cost, CostModel};

#[test]
fn exact_ged_matches_enumeration_on_small_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let costs = CostModel::unit();
    for _ in 0..150 {
        let g1 = sized_tree(&mut rng, 0..=5);
        let g2 = sized_tree(&mut rng, 0..=5);
        assert_eq!(
            ged_exact(&g1, &g2, &costs),
            brute_force_ged(&g1, &g2, &costs),
            "{g1:?} vs {g2:?}"
        );
    }
}

#[test]
fn exact_ged_matches_enumeration_under_skewed_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let costs = CostModel {
        node_insert: 2.0,
        node_delete: 0.5,
        node_substitute: 1.5,
        edge_insert: 0.25,
        edge_delete: 3.0,
    };
    for _ in 0..100 {
        let g1 = sized_tree(&mut rng, 1..=4);
        let g2 = sized_tree(&mut rng, 1..=4);
        let exact = ged_exact(&g1, &g2, &costs);
        let oracle = brute_force_ged(&g1, &g2, &costs);
        assert!((exact - oracle).abs() < 1e-9, "{exact} vs {oracle}");
    }
}

#[test]
fn edit_path_cost_agrees_with_independent_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let costs = CostModel::unit();
    for _ in 0..200 {
        let g1 = sized_tree(&mut rng, 0..=6);
        let g2 = sized_tree(&mut rng, 0..=6);
        let mut free: Vec<usize> = (0..g2.node_count()).collect();
        let map: Vec<Option<usize>> = (0..g1.node_count())
            .map(|_| {
                if free.is_empty() || rng.gen_bool(0.3) {
                    None
                } else {
                    Some(free.swap_remove(rng.gen_range(0..free.len())))
                }
            })
            .collect();
        assert_eq!(
            edit_path_cost(&g1, &g2, &costs, &map),
            induced_cost(&g1, &g2, &map, &costs)
        );
    }
}

#[test]
fn approximation_bounds_exact_from_above() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let costs = CostModel::unit();
    for _ in 0..60 {
        let g1 = sized_tree(&mut rng, 3..=7);
        let g2 = sized_tree(&mut rng, 3..=7);
        let exact = ged_exact(&g1, &g2, &costs);
        let approx = ged_approx(&g1, &g2, &costs);
        assert!(approx >= exact);
        assert!(approx <= teardown_cost(&g1, &g2, &costs));
    }
}

#[test]
fn similarity_threshold_switches_method() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let g1 = random_tree(&mut rng, 4);
    let g2 = random_tree(&mut rng, 4);
    let costs = CostModel::unit();
    assert_eq!(
        ged_similarity(&g1, &g2, &costs, 8).method,
        reviewnet::similarity::Method::GedExact
    );
    assert_eq!(
        ged_similarity(&g1, &g2, &costs, 7).method,
        reviewnet::similarity::Method::GedApprox
    );
}

#[test]
fn trie_mapping_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..60 {
        let (entries, files) = random_mapping_instance(&mut rng, 50, 500);
        let components: Vec<String> = entries.iter().map(|e| e.component.clone()).collect();
        let snapshot = ComponentSnapshot::new(chrono::NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), entries).unwrap();
        assert_eq!(
            map_files_to_components(&files, &snapshot),
            longest_prefix_scan(&components, &files)
        );
    }
}

proptest! {
    #[test]
    fn jaccard_matches_counting(
        a in prop::collection::vec(0u32..30, 0..20),
        b in prop::collection::vec(0u32..30, 0..20),
    ) {
        let sa: BTreeSet<u32> = a.iter().copied().collect();
        let sb: BTreeSet<u32> = b.iter().copied().collect();
        prop_assert_eq!(jaccard(&sa, &sb).value, jaccard_by_counting(&a, &b));
    }

    #[test]
    fn ged_is_a_symmetric_bounded_distance(seed in any::<u64>(), n1 in 0usize..6, n2 in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g1 = random_tree(&mut rng, n1);
        let g2 = random_tree(&mut rng, n2);
        let costs = CostModel::unit();
        let d = ged_exact(&g1, &g2, &costs);
        prop_assert_eq!(d, ged_exact(&g2, &g1, &costs));
        prop_assert!(d <= teardown_cost(&g1, &g2, &costs));
        prop_assert_eq!(ged_exact(&g1, &g1, &costs), 0.0);
        let s = ged_similarity(&g1, &g2, &costs, 8).value;
        prop_assert!((0.0..=1.0).contains(&s));
    }
}

fn graft(g: &ComponentGraph, labels: &[&str]) -> ComponentGraph {
    let mut h = if g.is_empty() {
        ComponentGraph::with_root("/")
    } else {
        g.clone()
    };
    let mut parent = 0;
    for l in labels {
        parent = h.add_child(parent, *l).unwrap();
    }
    h
}

#[test]
fn grafting_a_shared_subtree_never_lowers_exact_similarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let costs = CostModel::unit();
    for _ in 0..300 {
        let g1 = sized_tree(&mut rng, 1..=5);
        let g2 = sized_tree(&mut rng, 1..=5);
        let before = ged_similarity(&g1, &g2, &costs, usize::MAX).value;
        let after = ged_similarity(&graft(&g1, &["x", "y"]), &graft(&g2, &["x", "y"]), &costs, usize::MAX).value;
        assert!(after >= before, "{before} -> {after} for {g1:?} / {g2:?}");
    }
}

#[test]
fn approximate_similarity_never_exceeds_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let costs = CostModel::unit();
    for _ in 0..300 {
        let g1 = sized_tree(&mut rng, 1..=6);
        let g2 = sized_tree(&mut rng, 1..=6);
        let exact = ged_similarity(&g1, &g2, &costs, usize::MAX).value;
        let approx = ged_similarity(&g1, &g2, &costs, 2).value;
        assert!(approx <= exact);
    }
}
