use gossip_core::matching::{maximum_matching, maximum_matching_size, Bipartite};
use gossip_core::topology::{
    closed_form_expansion, generate, Topology, TopologyKind, TopologySpec,
    DEFAULT_EXHAUSTIVE_LIMIT,
};
use gossip_core::{Error, Rational};

use proptest::prelude::*;

fn spec(kind: TopologyKind, n: usize, seed: u64) -> TopologySpec {
    TopologySpec::new(kind, n, seed)
}

fn node_set(ids: &[usize]) -> gossip_core::topology::NodeSet {
    ids.iter().copied().collect()
}

/// Oracle: maximum matching in a general graph by DP over node subsets.
/// Independent of the Hopcroft-Karp implementation under test.
fn matching_oracle(n: usize, edges: &[(usize, usize)]) -> usize {
    assert!(n <= 16);
    let mut adj = vec![0u32; n];
    for &(u, v) in edges {
        adj[u] |= 1 << v;
        adj[v] |= 1 << u;
    }
    let full = 1u32 << n;
    let mut dp = vec![0u8; full as usize];
    for mask in 1..full {
        let u = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << u);
        let mut best = dp[rest as usize];
        let mut cands = adj[u] & rest;
        while cands != 0 {
            let v = cands.trailing_zeros() as usize;
            cands &= cands - 1;
            best = best.max(1 + dp[(rest & !(1 << v)) as usize]);
        }
        dp[mask as usize] = best;
    }
    dp[(full - 1) as usize] as usize
}

fn exhaustive_alpha(topo: &Topology) -> Rational {
    topo.vertex_expansion(DEFAULT_EXHAUSTIVE_LIMIT).unwrap()
}

#[test]
fn line_shape() {
    let t = generate(&spec(TopologyKind::Line, 5, 0)).unwrap();
    assert_eq!(t.edges(), vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    assert_eq!(t.max_degree(), 2);
    assert_eq!(t.degree_bound(), 2);
}

#[test]
fn ring_and_star_shapes() {
    let ring = generate(&spec(TopologyKind::Ring, 6, 0)).unwrap();
    assert_eq!(ring.edge_count(), 6);
    assert!(ring.contains_edge(5, 0));
    assert!(ring.degree(0) == 2 && ring.degree(3) == 2);

    let star = generate(&spec(TopologyKind::Star, 5, 0)).unwrap();
    assert_eq!(star.degree(0), 4);
    assert_eq!(star.max_degree(), 4);
    assert_eq!(star.degree_bound(), 4);
    assert_eq!(star.edge_count(), 4);
}

#[test]
fn grid_and_tree_and_barbell_shapes() {
    let grid = generate(&spec(TopologyKind::Grid, 9, 0)).unwrap();
    assert_eq!(grid.edge_count(), 12); // 3x3: 6 horizontal + 6 vertical
    assert_eq!(grid.max_degree(), 4);

    let tree = generate(&spec(TopologyKind::BinaryTree, 7, 0)).unwrap();
    assert_eq!(tree.edge_count(), 6);
    assert_eq!(tree.neighbors(0), &[1, 2]);
    assert_eq!(tree.neighbors(1), &[0, 3, 4]);

    let barbell = generate(&spec(TopologyKind::Barbell, 8, 0)).unwrap();
    assert_eq!(barbell.edge_count(), 2 * 6 + 1);
    assert!(barbell.contains_edge(3, 4));
    assert!(!barbell.contains_edge(0, 7));
}

#[test]
fn degree_bound_is_next_power_of_two_with_floor_two() {
    let k2 = generate(&spec(TopologyKind::Clique, 2, 0)).unwrap();
    assert_eq!(k2.max_degree(), 1);
    assert_eq!(k2.degree_bound(), 2);

    let c5 = generate(&spec(TopologyKind::Clique, 5, 0)).unwrap();
    assert_eq!(c5.max_degree(), 4);
    assert_eq!(c5.degree_bound(), 4);

    let c6 = generate(&spec(TopologyKind::Clique, 6, 0)).unwrap();
    assert_eq!(c6.degree_bound(), 8);

    let overridden = c6.clone().with_degree_bound(16).unwrap();
    assert_eq!(overridden.degree_bound(), 16);
    assert!(c6.clone().with_degree_bound(4).is_err());
}

#[test]
fn random_regular_has_uniform_degree_and_is_deterministic() {
    let s = spec(TopologyKind::RandomRegular { degree: 3 }, 8, 7);
    let a = generate(&s).unwrap();
    let b = generate(&s).unwrap();
    assert_eq!(a, b);
    for u in 0..8 {
        assert_eq!(a.degree(u), 3);
    }
    assert!(generate(&spec(TopologyKind::RandomRegular { degree: 3 }, 5, 0)).is_err());
}

#[test]
fn erdos_renyi_is_connected_across_seeds() {
    for seed in 0..20 {
        let t = generate(&spec(TopologyKind::ErdosRenyi { p: 0.3 }, 12, seed)).unwrap();
        assert_eq!(t.n(), 12);
        // from_edges already rejects disconnected graphs; reaching here is the test.
    }
}

#[test]
fn generation_fails_after_exhausting_attempts() {
    let err = generate(&spec(TopologyKind::ErdosRenyi { p: 1e-9 }, 12, 0)).unwrap_err();
    assert!(matches!(err, Error::GenerationFailed { attempts: 100, .. }));
}

#[test]
fn boundary_examples() {
    let line = generate(&spec(TopologyKind::Line, 4, 0)).unwrap();
    assert_eq!(line.boundary(&node_set(&[1, 2])).unwrap(), node_set(&[0, 3]));
    assert_eq!(line.boundary(&node_set(&[0])).unwrap(), node_set(&[1]));

    let clique = generate(&spec(TopologyKind::Clique, 4, 0)).unwrap();
    assert_eq!(clique.boundary(&node_set(&[0, 1])).unwrap(), node_set(&[2, 3]));

    assert!(line.boundary(&node_set(&[])).is_err());
    assert!(line.boundary(&node_set(&[0, 1, 2, 3])).is_err());
    assert!(line.boundary(&node_set(&[9])).is_err());
}

#[test]
fn expansion_frozen_values() {
    let line8 = generate(&spec(TopologyKind::Line, 8, 0)).unwrap();
    assert_eq!(exhaustive_alpha(&line8), Rational::new(1, 4));

    let clique4 = generate(&spec(TopologyKind::Clique, 4, 0)).unwrap();
    assert_eq!(exhaustive_alpha(&clique4), Rational::new(1, 1));

    let k2 = generate(&spec(TopologyKind::Clique, 2, 0)).unwrap();
    assert_eq!(exhaustive_alpha(&k2), Rational::new(1, 1));

    let ring8 = generate(&spec(TopologyKind::Ring, 8, 0)).unwrap();
    assert_eq!(exhaustive_alpha(&ring8), Rational::new(1, 2));

    let star5 = generate(&spec(TopologyKind::Star, 5, 0)).unwrap();
    assert_eq!(exhaustive_alpha(&star5), Rational::new(1, 2));
}

#[test]
fn closed_forms_match_exhaustive_enumeration() {
    for n in 2..=12 {
        for kind in [TopologyKind::Line, TopologyKind::Ring, TopologyKind::Clique] {
            if kind == TopologyKind::Ring && n < 3 {
                continue;
            }
            let t = generate(&spec(kind, n, 0)).unwrap();
            let exhaustive = exhaustive_alpha(&t);
            let closed = closed_form_expansion(kind, n).unwrap();
            assert_eq!(exhaustive, closed, "kind={kind} n={n}");
        }
    }
}

#[test]
fn expansion_rejects_sizes_beyond_limit() {
    let t = generate(&spec(TopologyKind::Line, 24, 0)).unwrap();
    assert!(matches!(
        t.vertex_expansion(DEFAULT_EXHAUSTIVE_LIMIT),
        Err(Error::ExhaustiveLimit { n: 24, limit: 20 })
    ));
    // The hard cap applies even when callers ask for more.
    assert!(matches!(t.vertex_expansion(100), Err(Error::ExhaustiveLimit { .. })));
}

#[test]
fn cut_matching_frozen_values() {
    let clique4 = generate(&spec(TopologyKind::Clique, 4, 0)).unwrap();
    assert_eq!(clique4.cut_matching(&node_set(&[0, 1])).unwrap(), 2);

    let line4 = generate(&spec(TopologyKind::Line, 4, 0)).unwrap();
    assert_eq!(line4.cut_matching(&node_set(&[0, 2])).unwrap(), 2);

    let star5 = generate(&spec(TopologyKind::Star, 5, 0)).unwrap();
    assert_eq!(star5.cut_matching(&node_set(&[0])).unwrap(), 1);
    assert_eq!(star5.cut_matching(&node_set(&[1, 2])).unwrap(), 1);

    assert!(clique4.cut_matching(&node_set(&[0, 1, 2])).is_err());
    assert!(clique4.cut_matching(&node_set(&[])).is_err());
}

#[test]
fn hopcroft_karp_agrees_with_subset_dp_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let left = rng.gen_range(1..=6);
        let right = rng.gen_range(1..=6);
        let mut g = Bipartite::new(left, right);
        let mut edges = Vec::new();
        for l in 0..left {
            for r in 0..right {
                if rng.gen_bool(0.4) {
                    g.add_edge(l, r);
                    edges.push((l, left + r));
                }
            }
        }
        let expect = matching_oracle(left + right, &edges);
        assert_eq!(maximum_matching_size(&g), expect);
    }
}

#[test]
fn matching_pairs_are_a_valid_matching() {
    let mut g = Bipartite::new(3, 3);
    for l in 0..3 {
        for r in 0..3 {
            g.add_edge(l, r);
        }
    }
    let m = maximum_matching(&g);
    assert_eq!(m.size(), 3);
    let lefts: std::collections::BTreeSet<_> = m.pairs.iter().map(|p| p.0).collect();
    let rights: std::collections::BTreeSet<_> = m.pairs.iter().map(|p| p.1).collect();
    assert_eq!(lefts.len(), 3);
    assert_eq!(rights.len(), 3);
}

#[test]
fn cut_matching_agrees_with_oracle_on_random_graphs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for seed in 0..40u64 {
        let n = rng.gen_range(4..=9);
        let t = generate(&spec(TopologyKind::ErdosRenyi { p: 0.45 }, n, seed)).unwrap();
        for _ in 0..8 {
            let size = rng.gen_range(1..=n / 2);
            let mut s = gossip_core::topology::NodeSet::new();
            while s.len() < size {
                s.insert(rng.gen_range(0..n));
            }
            let crossing: Vec<(usize, usize)> = t
                .edges()
                .into_iter()
                .filter(|(u, v)| s.contains(u) != s.contains(v))
                .collect();
            assert_eq!(t.cut_matching(&s).unwrap(), matching_oracle(n, &crossing));
        }
    }
}

#[test]
fn matching_floor_report_on_generator_suite() {
    let suite = [
        spec(TopologyKind::Line, 8, 0),
        spec(TopologyKind::Ring, 9, 0),
        spec(TopologyKind::Clique, 6, 0),
        spec(TopologyKind::Star, 7, 0),
        spec(TopologyKind::Grid, 9, 0),
        spec(TopologyKind::BinaryTree, 10, 0),
        spec(TopologyKind::Barbell, 8, 0),
        spec(TopologyKind::RandomRegular { degree: 3 }, 10, 3),
        spec(TopologyKind::ErdosRenyi { p: 0.4 }, 9, 4),
    ];
    for s in suite {
        let t = generate(&s).unwrap();
        let report = t.check_matching_floor(14).unwrap();
        assert!(report.holds(), "violations on {}: {:?}", s.kind, report.violations);
        assert!(report.min_ratio >= report.quarter_alpha);
        assert!(report.subsets_checked > 0);
    }
}

#[test]
fn edge_list_round_trip() {
    let t = generate(&spec(TopologyKind::Barbell, 6, 0)).unwrap();
    let text = t.to_edge_list();
    assert!(text.starts_with("6 7\n"));
    let back = Topology::parse_edge_list(&text).unwrap();
    assert_eq!(t, back);
}

#[test]
fn edge_list_rejects_malformed_input() {
    assert!(Topology::parse_edge_list("").is_err());
    assert!(Topology::parse_edge_list("3 1\n0 1\n1 2\n").is_err()); // count mismatch
    assert!(Topology::parse_edge_list("3 2\n0 1\n1 1\n").is_err()); // self-loop
    assert!(Topology::parse_edge_list("3 2\n0 1\n0 1\n").is_err()); // duplicate
    assert!(Topology::parse_edge_list("4 2\n0 1\n2 3\n").is_err()); // disconnected
    assert!(Topology::parse_edge_list("2 1\n0 x\n").is_err());
}

#[test]
fn kind_string_round_trip() {
    for text in ["line", "ring", "clique", "star", "grid", "binary_tree", "random_regular:3", "erdos_renyi:0.25", "barbell"] {
        let kind: TopologyKind = text.parse().unwrap();
        assert_eq!(kind.to_string(), text);
    }
    assert!("line:3".parse::<TopologyKind>().is_err());
    assert!("random_regular".parse::<TopologyKind>().is_err());
    assert!("mesh".parse::<TopologyKind>().is_err());
}

#[test]
fn spec_json_round_trip() {
    let s = spec(TopologyKind::RandomRegular { degree: 4 }, 16, 9);
    let json = serde_json::to_string(&s).unwrap();
    assert!(json.contains("\"kind\":\"random_regular\""));
    let back: TopologySpec = serde_json::from_str(&json).unwrap();
    assert_eq!(s, back);
}

proptest! {
    #[test]
    fn boundary_is_outside_and_adjacent(seed in 0u64..40, n in 5usize..10, size in 1usize..4) {
        let t = generate(&spec(TopologyKind::ErdosRenyi { p: 0.4 }, n, seed)).unwrap();
        let s: gossip_core::topology::NodeSet = (0..size.min(n - 1)).collect();
        let b = t.boundary(&s).unwrap();
        for v in &b {
            prop_assert!(!s.contains(v));
            prop_assert!(t.neighbors(*v).iter().any(|u| s.contains(u)));
        }
        for v in (0..n).filter(|v| !s.contains(v) && !b.contains(v)) {
            prop_assert!(!t.neighbors(v).iter().any(|u| s.contains(u)));
        }
    }

    #[test]
    fn expansion_at_most_one_for_even_n(seed in 0u64..30, half in 3usize..6) {
        let n = 2 * half;
        let t = generate(&spec(TopologyKind::ErdosRenyi { p: 0.5 }, n, seed)).unwrap();
        let alpha = t.vertex_expansion(DEFAULT_EXHAUSTIVE_LIMIT).unwrap();
        prop_assert!(alpha <= Rational::new(1, 1));
        prop_assert!(alpha > Rational::new(0, 1));
    }

    #[test]
    fn cut_matching_bounded_by_sides(seed in 0u64..30, n in 4usize..10) {
        let t = generate(&spec(TopologyKind::ErdosRenyi { p: 0.5 }, n, seed)).unwrap();
        let s: gossip_core::topology::NodeSet = (0..n / 2).collect();
        let nu = t.cut_matching(&s).unwrap();
        let boundary = t.boundary(&s).unwrap();
        prop_assert!(nu <= s.len());
        prop_assert!(nu <= boundary.len());
        prop_assert!(nu >= 1); // connected graphs always have a crossing edge
    }
}
