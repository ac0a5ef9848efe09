use std::collections::BTreeSet;

use credigraph_core::degree::{compute_degrees, filter_by_degree, Comparison};
use credigraph_core::fixtures::random_edges;
use credigraph_core::graph::{read_edges, write_edges};
use credigraph_core::rng::SplitMix64;

struct Oracle {
    survivors: Vec<u64>,
    edges: Vec<(u64, u64)>,
}

/// Survive iff raw in + out degree exceeds `threshold`; compact ids follow
/// raw-id order.
fn brute_force(n: u64, edges: &[(u64, u64)], threshold: u64) -> Oracle {
    let mut deg = vec![0u64; n as usize];
    for &(s, d) in edges {
        deg[s as usize] += 1;
        deg[d as usize] += 1;
    }
    let survivors: Vec<u64> = (0..n).filter(|&v| deg[v as usize] > threshold).collect();
    let compact = |v: u64| survivors.binary_search(&v).ok().map(|i| i as u64);
    let kept = edges
        .iter()
        .filter_map(|&(s, d)| Some((compact(s)?, compact(d)?)))
        .collect();
    Oracle { survivors, edges: kept }
}

#[test]
fn single_pass_filter_matches_oracle_and_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = SplitMix64::new(99);
    for case in 0..50u64 {
        let n = 2 + rng.below(1_999);
        let m = rng.below(5 * n + 1);
        let edges = random_edges(n, m, case);
        let raw = dir.path().join("raw.bin");
        write_edges(&raw, edges.iter().copied()).unwrap();
        let table = compute_degrees(&raw, n, dir.path().join("deg.bin")).unwrap();

        let mut previous: Option<BTreeSet<u64>> = None;
        let mut previous_edges = u64::MAX;
        for threshold in 0..=6u64 {
            let out = dir.path().join(format!("f{threshold}.bin"));
            let f = filter_by_degree(&raw, &table, threshold as i64, Comparison::Greater, &out, "t").unwrap();
            let oracle = brute_force(n, &edges, threshold);
            let survivors: Vec<u64> = f.survivors.iter().collect();
            assert_eq!(survivors, oracle.survivors, "case {case} threshold {threshold}");
            assert_eq!(read_edges(&out).unwrap(), oracle.edges, "case {case} threshold {threshold}");
            let set: BTreeSet<u64> = survivors.into_iter().collect();
            if let Some(prev) = &previous {
                assert!(set.is_subset(prev), "survivors must shrink as the threshold grows");
                assert!(f.n_edges <= previous_edges);
            }
            previous = Some(set);
            previous_edges = f.n_edges;
        }
    }
}

#[test]
fn degree_table_matches_direct_count() {
    let dir = tempfile::tempdir().unwrap();
    let edges = random_edges(300, 2_000, 5);
    write_edges(dir.path().join("e"), edges.iter().copied()).unwrap();
    let t = compute_degrees(dir.path().join("e"), 300, dir.path().join("d")).unwrap();
    for v in 0..300u64 {
        let out = edges.iter().filter(|e| e.0 == v).count() as u32;
        let inn = edges.iter().filter(|e| e.1 == v).count() as u32;
        assert_eq!((t.out_degree(v), t.in_degree(v)), (out, inn));
    }
}
