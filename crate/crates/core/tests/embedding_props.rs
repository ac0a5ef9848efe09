use credigraph_core::embedding::{
    ingest_embeddings, mrl_truncate, pseudo_embed, EmbeddingMatrix, EmbeddingWriter, IngestConfig, PseudoProvider,
};
use credigraph_core::host::NodeKey;
use credigraph_core::text::{DomainTextBundle, KeptDocument};
use ndarray::Array2;
use proptest::prelude::*;

#[test]
fn pseudo_embeddings_are_nearly_orthogonal() {
    let (n, dim) = (10_000usize, 64usize);
    let mut x = Array2::<f64>::zeros((n, dim));
    for i in 0..n {
        let v = pseudo_embed(&format!("document {i}"), dim, 42);
        x.row_mut(i).iter_mut().zip(&v).for_each(|(d, &s)| *d = s as f64);
    }
    let mut total = 0.0;
    let block = 1_000;
    for start in (0..n).step_by(block) {
        let rows = x.slice(ndarray::s![start..start + block, ..]);
        let gram = rows.dot(&x.t());
        for (r, row) in gram.outer_iter().enumerate() {
            let i = start + r;
            total += row.iter().skip(i + 1).map(|c| c.abs()).sum::<f64>();
        }
    }
    let mean = total / (n * (n - 1) / 2) as f64;
    assert!(mean < 0.2, "mean |cos| = {mean}");
}

fn random_matrix(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut m = EmbeddingMatrix::new(dim, "pseudo");
    for i in 0..n {
        m.insert(NodeKey::from_host(&format!("r{i}.example.net")).unwrap(), pseudo_embed(&i.to_string(), dim, seed)).unwrap();
    }
    m
}

#[test]
fn truncation_to_128_gives_unit_rows() {
    let t = mrl_truncate(&random_matrix(200, 1024, 1), 128).unwrap();
    for row in t.rows.values() {
        let norm = row.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
    assert_eq!(t.provider_tag, "pseudo/mrl128");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn truncation_is_prefix_consistent(dim in 2usize..96, a in 1usize..96, b in 1usize..96, seed in any::<u64>()) {
        let k1 = a.min(dim).max(b.min(dim));
        let k2 = a.min(dim).min(b.min(dim));
        let m = random_matrix(8, dim, seed);
        let twice = mrl_truncate(&mrl_truncate(&m, k1).unwrap(), k2).unwrap();
        let once = mrl_truncate(&m, k2).unwrap();
        for (x, y) in twice.rows.values().flatten().zip(once.rows.values().flatten()) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn persistence_is_bit_exact(n in 0usize..20, dim in 1usize..40, seed in any::<u64>()) {
        let m = random_matrix(n, dim, seed);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.cgemb");
        m.write(&p).unwrap();
        let back = EmbeddingMatrix::read(&p).unwrap();
        prop_assert_eq!(back.dim, m.dim);
        prop_assert_eq!(&back.provider_tag, &m.provider_tag);
        prop_assert_eq!(back.rows.len(), m.rows.len());
        for (a, b) in back.rows.values().zip(m.rows.values()) {
            prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

fn bundle(i: usize) -> DomainTextBundle {
    let t = chrono::Utc::now();
    DomainTextBundle {
        node: NodeKey::from_host(&format!("b{i}.example.org")).unwrap(),
        total_documents_seen: 1,
        documents_kept: vec![KeptDocument { url: format!("https://b{i}.example.org/"), fetch_time: t, text: format!("text {i}") }],
        merged_text: format!("text {i}"),
        truncation_limit: 100,
    }
}

#[test]
fn pseudo_ingestion_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let provider = PseudoProvider { dim: 16, seed: 3 };
    let mut files = Vec::new();
    for run in 0..2 {
        let p = dir.path().join(format!("run{run}.cgemb"));
        let mut w = EmbeddingWriter::create(&p, 16, "pseudo").unwrap();
        let misses = ingest_embeddings((0..100).map(bundle), &provider, IngestConfig { batch_size: 7, ..Default::default() }, &mut w).unwrap();
        assert!(misses.is_empty());
        assert_eq!(w.finish().unwrap(), 100);
        files.push(std::fs::read(&p).unwrap());
    }
    assert_eq!(files[0], files[1]);
}
