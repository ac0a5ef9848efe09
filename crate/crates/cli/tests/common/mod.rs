//! Drives the `credigraph` binary over a generated crawl.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn credigraph(args: &[&str]) -> Output {
    credigraph_in(args, &[])
}

/// Runs the binary with extra environment variables; logging is silenced.
pub fn credigraph_in(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_credigraph"));
    cmd.args(args).env("CREDIGRAPH_LOG", "off").env_remove("CREDIGRAPH_CONFIG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawning credigraph")
}

pub fn describe(args: &[&str], out: &Output) -> String {
    format!(
        "credigraph {} exited with {:?}\nstdout:\n{}\nstderr:\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

/// Every path the full chain reads or writes, rooted at one directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }

    pub fn p(&self, rel: &str) -> String {
        self.root.join(rel).to_string_lossy().into_owned()
    }

    /// The chain in order, one argument vector per stage.
    pub fn stages(&self, seed: u64) -> Vec<Vec<String>> {
        let seed = seed.to_string();
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        vec![
            s(&["gen-fixtures", "--out", &self.p("fixture"), "--seed", &seed]),
            s(&["build-graph", "--wat", &self.p("fixture/wat"), "--out", &self.p("raw"), "--snapshot-id", "CC-MAIN-2024-51"]),
            s(&["filter", "--snapshot", &self.p("raw"), "--out", &self.p("filtered")]),
            s(&["stats", "--snapshot", &self.p("raw")]),
            s(&[
                "extract-text",
                "--wet",
                &self.p("fixture/wet"),
                "--snapshot",
                &self.p("filtered"),
                "--homepages",
                &self.p("fixture/homepages.json"),
                "--out",
                &self.p("text.cgtxt"),
            ]),
            s(&["embed", "--bundles", &self.p("text.cgtxt"), "--out", &self.p("emb.cgemb")]),
            s(&["join-labels", "--labels", &self.p("fixture/labels.csv"), "--snapshot", &self.p("filtered"), "--out", &self.p("labels.json")]),
            s(&["split", "--labels", &self.p("labels.json"), "--embeddings", &self.p("emb.cgemb"), "--out", &self.p("split.json")]),
            s(&[
                "train-mlp",
                "--embeddings",
                &self.p("emb.cgemb"),
                "--labels",
                &self.p("labels.json"),
                "--split",
                &self.p("split.json"),
                "--out",
                &self.p("run"),
            ]),
            s(&[
                "export",
                "--run",
                &self.p("run"),
                "--embeddings",
                &self.p("emb.cgemb"),
                "--labels",
                &self.p("labels.json"),
                "--split",
                &self.p("split.json"),
                "--snapshot",
                &self.p("filtered"),
                "--out",
                &self.p("export"),
            ]),
        ]
    }

    /// Job manifests the chain writes, in stage order.
    pub fn manifests(&self) -> Vec<PathBuf> {
        [
            "fixture/gen-fixtures.job.json",
            "raw/build-graph.job.json",
            "filtered/filter.job.json",
            "raw/stats.json.job.json",
            "text.cgtxt.job.json",
            "emb.cgemb.job.json",
            "labels.json.job.json",
            "split.json.job.json",
            "run/train-mlp.job.json",
            "export/export.job.json",
        ]
        .iter()
        .map(|r| self.root.join(r))
        .collect()
    }
}

/// Runs every stage, failing on the first non-zero exit.
pub fn run_chain(layout: &Layout, seed: u64) -> Result<Vec<Output>, String> {
    let mut outputs = Vec::new();
    for stage in layout.stages(seed) {
        let args: Vec<&str> = stage.iter().map(String::as_str).collect();
        let out = credigraph(&args);
        if !out.status.success() {
            return Err(describe(&args, &out));
        }
        outputs.push(out);
    }
    Ok(outputs)
}

pub fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}
