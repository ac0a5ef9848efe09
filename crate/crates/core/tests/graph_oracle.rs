use std::collections::BTreeSet;

use credigraph_core::fixtures::random_links;
use credigraph_core::graph::{merge_batches, read_edges, BatchGraph, NodeDictionary};
use credigraph_core::rng::SplitMix64;
use proptest::prelude::*;

/// Splits pages and links into `k` batches, writes and merges them, and
/// returns the merged keys and key-level edges.
fn build(pages: &[String], links: &[credigraph_core::archive::PageLink], k: usize, seed: u64) -> (Vec<String>, BTreeSet<(String, String)>, NodeDictionary) {
    let dir = tempfile::tempdir().unwrap();
    let mut batches = vec![BatchGraph::new(); k];
    let mut rng = SplitMix64::new(seed);
    for p in pages {
        batches[rng.below(k as u64) as usize].add_page(p);
    }
    for l in links {
        batches[rng.below(k as u64) as usize].add_link(l);
    }
    let paths: Vec<_> = (0..k).map(|i| dir.path().join(format!("b{i}.cgb"))).collect();
    for (b, p) in batches.iter().zip(&paths) {
        b.write(p).unwrap();
    }
    let merged = merge_batches(&paths, dir.path().join("dict.txt"), dir.path().join("edges.bin")).unwrap();
    let keys: Vec<String> = merged.dictionary.keys().iter().map(|k| k.as_str().to_string()).collect();
    let edges = read_edges(&merged.edges_path).unwrap();
    assert!(edges.windows(2).all(|w| w[0] < w[1]), "edge list sorted and unique");
    let edges = edges.into_iter().map(|(s, d)| (keys[s as usize].clone(), keys[d as usize].clone())).collect();
    let dict = NodeDictionary::read(dir.path().join("dict.txt")).unwrap();
    (keys, edges, dict)
}

#[test]
fn batch_merge_equals_brute_force_on_twenty_fixtures() {
    let mut rng = SplitMix64::new(2024);
    for case in 0..20u64 {
        let n_links = 1_000 + rng.below(99_000) as usize;
        let n_hosts = 20 + rng.below(3_000) as usize;
        let k = 1 + rng.below(6) as usize;
        let f = random_links(n_hosts, n_links, case);
        let (keys, edges, dict) = build(&f.pages, &f.links, k, case);
        assert_eq!(keys, f.truth.nodes.iter().cloned().collect::<Vec<_>>(), "case {case} nodes");
        assert_eq!(edges, f.truth.edges, "case {case} edges");
        for (id, key) in dict.iter() {
            assert_eq!(dict.id(key), Some(id));
        }
        assert_eq!(dict.len(), keys.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn batching_does_not_change_the_graph(seed in any::<u64>(), k in 1usize..8) {
        let f = random_links(40, 400, seed);
        let one = build(&f.pages, &f.links, 1, seed);
        let many = build(&f.pages, &f.links, k, seed ^ 1);
        prop_assert_eq!(one.0, many.0);
        prop_assert_eq!(one.1, many.1);
    }
}
