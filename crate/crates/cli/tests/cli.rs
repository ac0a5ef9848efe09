mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use common::{credigraph, credigraph_in, describe, read_json, run_chain, Layout};

fn chain(seed: u64) -> (tempfile::TempDir, Layout) {
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    run_chain(&layout, seed).unwrap_or_else(|e| panic!("{e}"));
    (dir, layout)
}

fn ok(args: &[&str]) -> String {
    let out = credigraph(args);
    assert!(out.status.success(), "{}", describe(args, &out));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(args: &[&str]) -> Option<i32> {
    credigraph(args).status.code()
}

#[test]
fn stats_agree_with_fixture_truth() {
    let (dir, _) = chain(3);
    let truth = read_json(&dir.path().join("fixture/ground_truth.json"));
    let stats = &read_json(&dir.path().join("raw/stats.json"))["stats"];
    assert_eq!(stats["n_nodes"], truth["graph"]["nodes"]);
    assert_eq!(stats["n_edges"], truth["graph"]["edges"]);
    assert_eq!(stats["max_degree"], truth["graph"]["max_degree"]);
    let nodes = truth["graph"]["nodes"].as_f64().unwrap();
    let edges = truth["graph"]["edges"].as_f64().unwrap();
    assert!((stats["mean_degree"].as_f64().unwrap() - 2.0 * edges / nodes).abs() < 1e-9);
}

#[test]
fn filter_retention_matches_degree_rule_on_truth_edges() {
    let (dir, _) = chain(5);
    let truth = read_json(&dir.path().join("fixture/ground_truth.json"));
    let edges: Vec<(String, String)> = serde_json::from_value(truth["edges"].clone()).unwrap();
    let nodes: Vec<String> = serde_json::from_value(truth["nodes"].clone()).unwrap();
    let mut degree: BTreeMap<&str, u64> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
    for (s, d) in &edges {
        *degree.get_mut(s.as_str()).unwrap() += 1;
        *degree.get_mut(d.as_str()).unwrap() += 1;
    }
    let kept: BTreeSet<&str> = degree.iter().filter(|(_, &d)| d > 3).map(|(&n, _)| n).collect();
    let kept_edges = edges.iter().filter(|(s, d)| kept.contains(s.as_str()) && kept.contains(d.as_str())).count();

    let r = read_json(&dir.path().join("filtered/retention.json"));
    assert_eq!(r["threshold"], 3);
    assert_eq!(r["raw"]["nodes"], nodes.len());
    assert_eq!(r["raw"]["edges"], edges.len());
    assert_eq!(r["filtered"]["nodes"], kept.len());
    assert_eq!(r["filtered"]["edges"], kept_edges);
    let dictionary = std::fs::read_to_string(dir.path().join("filtered/dictionary.cgdict")).unwrap();
    let keys: BTreeSet<&str> = dictionary.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(keys, kept);
}

#[test]
fn export_points_at_readable_artifacts() {
    let (dir, _) = chain(9);
    let inputs = read_json(&dir.path().join("export/gnn_inputs.json"));
    assert_eq!(inputs["format"], "CGGNNIN1");
    for key in ["snapshot_manifest", "edges", "dictionary", "embeddings", "labels", "split"] {
        let p = inputs[key].as_str().unwrap();
        assert!(Path::new(p).is_absolute() && Path::new(p).exists(), "{key}: {p}");
    }
    let edges = std::fs::read(inputs["edges"].as_str().unwrap()).unwrap();
    assert_eq!(&edges[..7], b"CGEDGE1");
    let emb = std::fs::read(inputs["embeddings"].as_str().unwrap()).unwrap();
    assert_eq!(&emb[..8], b"CGEMB1\0\0");
    assert_eq!(read_json(Path::new(inputs["split"].as_str().unwrap()))["format"], "CGSPLIT1");
    assert_eq!(inputs["fanouts"], serde_json::json!([50, 50, 50]));
    let results = read_json(&dir.path().join("run/results.json"));
    assert_eq!(results["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn training_twice_gives_identical_reports() {
    let (dir, layout) = chain(4);
    ok(&[
        "train-mlp",
        "--embeddings",
        &layout.p("emb.cgemb"),
        "--labels",
        &layout.p("labels.json"),
        "--split",
        &layout.p("split.json"),
        "--out",
        &layout.p("run2"),
    ]);
    for f in ["report.json", "model.json", "results.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("run").join(f)).unwrap(),
            std::fs::read(dir.path().join("run2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn force_reruns_and_rerun_detection_skips() {
    let (_dir, layout) = chain(2);
    let filter = ["filter", "--snapshot", &layout.p("raw"), "--out", &layout.p("filtered")];
    assert!(ok(&filter).contains("up to date"));
    let mut forced = vec!["--force"];
    forced.extend(filter);
    assert!(!ok(&forced).contains("up to date"));
    let m = read_json(&layout.root.join("filtered/filter.job.json"));
    assert_eq!(m["status"], "completed");
    let changed = ["filter", "--snapshot", &layout.p("raw"), "--threshold", "4", "--out", &layout.p("filtered")];
    assert!(!ok(&changed).contains("up to date"));
}

#[test]
fn graph_is_independent_of_workers_and_batching() {
    let dir = tempfile::tempdir().unwrap();
    let d = |r: &str| dir.path().join(r).to_string_lossy().into_owned();
    ok(&["gen-fixtures", "--out", &d("fx"), "--seed", "12", "--records-per-file", "40"]);
    ok(&["--workers", "1", "build-graph", "--wat", &d("fx/wat"), "--out", &d("a")]);
    ok(&["--workers", "4", "build-graph", "--wat", &d("fx/wat"), "--out", &d("b"), "--batch-size", "1"]);
    for f in ["dictionary.cgdict", "edges.cgedge", "degrees.cgdeg", "manifest.json"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let a = read_json(&dir.path().join("a/build-graph.job.json"));
    let b = read_json(&dir.path().join("b/build-graph.job.json"));
    assert_ne!(a["hash"], b["hash"], "batch size is part of the job settings");
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let (dir, layout) = chain(6);
    let config = dir.path().join("settings.toml");
    std::fs::write(&config, "threshold = 40\n").unwrap();
    let cfg = config.to_string_lossy().into_owned();
    let out = layout.p("from-config");
    ok(&["--config", &cfg, "filter", "--snapshot", &layout.p("raw"), "--out", &out]);
    assert_eq!(read_json(&dir.path().join("from-config/retention.json"))["threshold"], 40);

    let out = layout.p("from-flag");
    ok(&["--config", &cfg, "filter", "--snapshot", &layout.p("raw"), "--threshold", "7", "--out", &out]);
    assert_eq!(read_json(&dir.path().join("from-flag/retention.json"))["threshold"], 7);

    let out = layout.p("from-env");
    let args = ["filter", "--snapshot", &layout.p("raw"), "--out", &out];
    let run = credigraph_in(&args, &[("CREDIGRAPH_CONFIG", &cfg)]);
    assert!(run.status.success(), "{}", describe(&args, &run));
    assert_eq!(read_json(&dir.path().join("from-env/retention.json"))["threshold"], 40);

    std::fs::write(&config, "treshold = 40\n").unwrap();
    assert_eq!(exit_code(&["--config", &cfg, "filter", "--snapshot", &layout.p("raw"), "--out", &out]), Some(1));
}

#[test]
fn exit_codes_separate_usage_input_and_success() {
    assert_eq!(exit_code(&["stats", "--bogus"]), Some(64));
    assert_eq!(exit_code(&["frobnicate"]), Some(64));
    assert_eq!(exit_code(&["--help"]), Some(0));
    assert_eq!(exit_code(&["stats", "--snapshot", "/nonexistent/snapshot"]), Some(1));
    assert_eq!(exit_code(&["build-graph", "--wat", "/nonexistent/x.warc.wat.gz", "--out", "/nonexistent/out"]), Some(1));
}

#[test]
fn wrong_artifact_version_is_an_input_error() {
    let (dir, layout) = chain(8);
    let split = dir.path().join("split.json");
    let text = std::fs::read_to_string(&split).unwrap().replacen("CGSPLIT1", "CGSPLIT9", 1);
    let bad = dir.path().join("bad-split.json");
    std::fs::write(&bad, text).unwrap();
    let args = [
        "train-mlp",
        "--embeddings",
        &layout.p("emb.cgemb"),
        "--labels",
        &layout.p("labels.json"),
        "--split",
        &bad.to_string_lossy(),
        "--out",
        &layout.p("bad-run"),
    ];
    let out = credigraph(&args);
    assert_eq!(out.status.code(), Some(1), "{}", describe(&args, &out));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CGSPLIT9"));
    assert_eq!(read_json(&dir.path().join("bad-run/train-mlp.job.json"))["status"], "failed");

    let emb = dir.path().join("bad.cgemb");
    let mut bytes = std::fs::read(dir.path().join("emb.cgemb")).unwrap();
    bytes[5] = b'9';
    std::fs::write(&emb, bytes).unwrap();
    let code = exit_code(&[
        "split",
        "--labels",
        &layout.p("labels.json"),
        "--embeddings",
        &emb.to_string_lossy(),
        "--out",
        &layout.p("bad-split-out.json"),
    ]);
    assert_eq!(code, Some(1));
}

#[test]
fn formula_mode_reproduces_published_summaries() {
    let stdout = ok(&["stats", "--nodes", "132547562", "--edges", "1124576420"]);
    assert!(stdout.contains("16.97") && stdout.contains("1.28e-07"), "{stdout}");
    let stdout = ok(&["stats", "--nodes", "45041648", "--edges", "1014523552"]);
    assert!(stdout.contains("45.05") && stdout.contains("1.00e-06"), "{stdout}");
}

#[test]
fn scratch_root_comes_from_the_environment() {
    let (dir, layout) = chain(10);
    let scratch = dir.path().join("scratch");
    std::fs::create_dir_all(&scratch).unwrap();
    let args = [
        "extract-text",
        "--wet",
        &layout.p("fixture/wet"),
        "--snapshot",
        &layout.p("filtered"),
        "--homepages",
        &layout.p("fixture/homepages.json"),
        "--out",
        &layout.p("text2.cgtxt"),
    ];
    let out = credigraph_in(&args, &[("CREDIGRAPH_SCRATCH", &scratch.to_string_lossy())]);
    assert!(out.status.success(), "{}", describe(&args, &out));
    assert_eq!(std::fs::read(dir.path().join("text.cgtxt")).unwrap(), std::fs::read(dir.path().join("text2.cgtxt")).unwrap());
    let report = read_json(&dir.path().join("text2.cgtxt.report.json"));
    assert_eq!(report, read_json(&dir.path().join("text.cgtxt.report.json")));
}
