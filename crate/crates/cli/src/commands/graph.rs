use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context as _;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;

use credigraph_core::archive::{extract_wat_links, open_archive, ArchiveError, LinkOptions, RecordType};
use credigraph_core::artifact::write_json;
use credigraph_core::degree::{filter_by_degree, filter_report, GraphCounts, RetentionReport};
use credigraph_core::graph::{merge_batches, BatchCounters, BatchGraph, NodeDictionary};
use credigraph_core::stats::{compute_stats, edge_density, mean_degree, scientific, StatsReport};
use credigraph_core::temporal::{
    assemble_snapshot, assign_timestamp, diff_snapshots, week_start, SnapshotFiles, SnapshotGraph, MANIFEST_FILE,
};

use super::{settings, BuildGraphArgs, Context, DiffArgs, FilterArgs, StatsArgs, DIFF_FORMAT, RETENTION_FORMAT, STATS_FORMAT};
use crate::config::ensure_dir;
use crate::error::{input_error, InputContext};
use crate::job::{dir_manifest, expand_files, file_manifest, run_job, Counters, JobOutput, JobSpec};

const DICTIONARY_FILE: &str = "dictionary.cgdict";
const EDGES_FILE: &str = "edges.cgedge";
const DEGREES_FILE: &str = "degrees.cgdeg";
const COMPACT_MAP_FILE: &str = "compact_map.tsv";

/// Files named on the command line, directories expanded, in sorted order.
pub fn collect_inputs(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if !p.exists() {
            return Err(input_error(format!("{} does not exist", p.display())));
        }
        files.extend(expand_files(p).input(|| format!("listing {}", p.display()))?);
    }
    files.retain(|f| !f.to_string_lossy().ends_with(".job.json"));
    files.sort();
    files.dedup();
    if files.is_empty() {
        return Err(input_error("no archive files found"));
    }
    Ok(files)
}

pub fn open_snapshot(path: &Path) -> anyhow::Result<SnapshotGraph> {
    let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    SnapshotGraph::open(&path).input(|| format!("reading snapshot manifest {}", path.display()))
}

fn first_record_date(path: &Path) -> anyhow::Result<NaiveDate> {
    let mut reader = open_archive(path).input(|| format!("opening {}", path.display()))?;
    match reader.find_map(Result::ok) {
        Some(rec) => Ok(rec.date.date_naive()),
        None => Err(input_error(format!("{} has no readable record to date the crawl", path.display()))),
    }
}

fn add_counters(a: &mut Counters, b: Counters) {
    a.records += b.records;
    a.errors += b.errors;
    a.skips += b.skips;
}

/// Reads every metadata record of one WAT file into `graph`. Damaged
/// records are counted and skipped; an unreadable file is an input error.
fn read_wat(path: &Path, options: LinkOptions, graph: &mut BatchGraph, counters: &mut Counters) -> anyhow::Result<()> {
    let reader = open_archive(path).input(|| format!("opening {}", path.display()))?;
    for rec in reader {
        match rec {
            Ok(r) if r.record_type == RecordType::Metadata => {
                counters.records += 1;
                match extract_wat_links(&r, options) {
                    Ok(links) => {
                        if let Some(uri) = &r.target_uri {
                            graph.add_page(uri);
                        }
                        links.iter().for_each(|l| graph.add_link(l));
                    }
                    Err(e) => {
                        counters.errors += 1;
                        tracing::warn!(file = %path.display(), uri = r.target_uri.as_deref().unwrap_or(""), error = %e, "unusable metadata record");
                    }
                }
            }
            Ok(_) => counters.skips += 1,
            Err(ArchiveError::Record { offset, message }) => {
                counters.errors += 1;
                tracing::warn!(file = %path.display(), offset, error = %message, "damaged record skipped");
            }
            Err(e) => return Err(e).input(|| format!("reading {}", path.display())),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct BatchSummary {
    counters: Counters,
    graph: BatchCounters,
}

fn build_batch(files: &[PathBuf], options: LinkOptions, out: &Path) -> anyhow::Result<BatchSummary> {
    let mut graph = BatchGraph::new();
    let mut counters = Counters::default();
    for f in files {
        read_wat(f, options, &mut graph, &mut counters)?;
    }
    graph.write(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(BatchSummary { counters, graph: graph.counters })
}

/// Runs `task` on every index in `0..n` with up to `workers` threads and
/// returns the results in index order.
pub fn parallel_map<T: Send>(n: usize, workers: usize, task: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = task(i);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every index runs")).collect()
}

pub fn build_graph(args: BuildGraphArgs, ctx: &Context) -> anyhow::Result<()> {
    let batch_size = args.batch_size.unwrap_or(ctx.config.batch_size);
    if batch_size == 0 {
        return Err(input_error("--batch-size must be positive"));
    }
    let files = collect_inputs(&args.wat)?;
    let timestamp = match &args.crawl_start {
        Some(s) => assign_timestamp(s).input(|| "--crawl-start".to_string())?,
        None => week_start(first_record_date(&files[0])?),
    };
    ensure_dir(&args.out)?;
    let options = LinkOptions { include_all_links: args.include_all_links };
    let spec = JobSpec {
        command: "build-graph",
        inputs: files.clone(),
        config: settings(&args, json!({ "batch_size": batch_size, "timestamp": timestamp })),
        manifest_path: dir_manifest(&args.out, "build-graph"),
        force: ctx.force,
    };
    let workers = ctx.config.workers();
    run_job(spec, || {
        let batch_dir = args.out.join("batches");
        if batch_dir.exists() {
            std::fs::remove_dir_all(&batch_dir)?;
        }
        ensure_dir(&batch_dir)?;
        let chunks: Vec<&[PathBuf]> = files.chunks(batch_size).collect();
        let batch_paths: Vec<PathBuf> =
            (0..chunks.len()).map(|i| batch_dir.join(format!("batch-{i:05}.cgbatch"))).collect();
        let summaries = parallel_map(chunks.len(), workers, |i| build_batch(chunks[i], options, &batch_paths[i]));

        let mut counters = Counters::default();
        let mut graph_counters = BatchCounters::default();
        for s in summaries {
            let s = s?;
            add_counters(&mut counters, s.counters);
            graph_counters.pages += s.graph.pages;
            graph_counters.links += s.graph.links;
            graph_counters.rejected_urls += s.graph.rejected_urls;
            graph_counters.self_loops += s.graph.self_loops;
        }
        tracing::info!(batches = chunks.len(), pages = graph_counters.pages, links = graph_counters.links, rejected_urls = graph_counters.rejected_urls, self_loops = graph_counters.self_loops, "batches written");

        merge_batches(&batch_paths, args.out.join(DICTIONARY_FILE), args.out.join(EDGES_FILE))?;
        let files = SnapshotFiles {
            dictionary: DICTIONARY_FILE.into(),
            edges: EDGES_FILE.into(),
            degrees: DEGREES_FILE.into(),
            ..SnapshotFiles::default()
        };
        let snapshot = assemble_snapshot(&args.out, &args.snapshot_id, timestamp, files, None)?;
        println!(
            "{}: {} nodes, {} edges ({} batches)",
            snapshot.manifest.snapshot_id,
            snapshot.manifest.counts.nodes,
            snapshot.manifest.counts.edges,
            chunks.len()
        );
        let mut outputs = vec![
            args.out.join(DICTIONARY_FILE),
            args.out.join(EDGES_FILE),
            args.out.join(DEGREES_FILE),
            args.out.join(MANIFEST_FILE),
        ];
        outputs.extend(batch_paths);
        Ok(JobOutput { outputs, counters })
    })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetentionFile {
    pub snapshot_id: String,
    pub threshold: i64,
    pub raw: GraphCounts,
    pub filtered: GraphCounts,
    pub retention: RetentionReport,
}

pub fn filter(args: FilterArgs, ctx: &Context) -> anyhow::Result<()> {
    let threshold = args.threshold.unwrap_or(ctx.config.threshold);
    if threshold < 0 {
        return Err(input_error(format!("threshold must be non-negative, got {threshold}")));
    }
    let raw = open_snapshot(&args.snapshot)?;
    ensure_dir(&args.out)?;
    let spec = JobSpec {
        command: "filter",
        inputs: vec![
            raw.base.join(MANIFEST_FILE),
            raw.dictionary_path(),
            raw.edges_path(),
            raw.resolve(&raw.manifest.files.degrees),
        ],
        config: settings(&args, json!({ "threshold": threshold })),
        manifest_path: dir_manifest(&args.out, "filter"),
        force: ctx.force,
    };
    run_job(spec, || {
        let degrees = raw.degrees().input(|| "reading raw degree table".to_string())?;
        let filtered = filter_by_degree(
            raw.edges_path(),
            &degrees,
            threshold,
            args.comparison.into(),
            args.out.join(EDGES_FILE),
            &raw.manifest.snapshot_id,
        )
        .input(|| "filtering raw snapshot".to_string())?;
        let dictionary = NodeDictionary::read(raw.dictionary_path()).input(|| "reading raw dictionary".to_string())?;
        if dictionary.len() as u64 != degrees.n() {
            return Err(input_error("raw dictionary and degree table disagree on the node count"));
        }
        filtered.compact_dictionary(&dictionary).write(args.out.join(DICTIONARY_FILE))?;
        filtered.write_compact_map(args.out.join(COMPACT_MAP_FILE))?;
        let files = SnapshotFiles {
            dictionary: DICTIONARY_FILE.into(),
            edges: EDGES_FILE.into(),
            degrees: DEGREES_FILE.into(),
            compact_map: Some(COMPACT_MAP_FILE.into()),
            ..SnapshotFiles::default()
        };
        let snapshot = assemble_snapshot(
            &args.out,
            &raw.manifest.snapshot_id,
            raw.manifest.timestamp,
            files,
            Some(filtered.provenance.clone()),
        )?;
        let raw_counts = GraphCounts { nodes: raw.manifest.counts.nodes, edges: raw.manifest.counts.edges };
        let kept = GraphCounts { nodes: snapshot.manifest.counts.nodes, edges: snapshot.manifest.counts.edges };
        let retention = filter_report(raw_counts, kept).input(|| "computing retention".to_string())?;
        let report = RetentionFile {
            snapshot_id: raw.manifest.snapshot_id.clone(),
            threshold,
            raw: raw_counts,
            filtered: kept,
            retention,
        };
        write_json(args.out.join("retention.json"), RETENTION_FORMAT, &report)?;
        println!(
            "kept {} of {} nodes ({:.2}%), {} of {} edges ({:.2}%)",
            kept.nodes, raw_counts.nodes, retention.node_retention_pct, kept.edges, raw_counts.edges, retention.edge_retention_pct
        );
        Ok(JobOutput {
            outputs: [DICTIONARY_FILE, EDGES_FILE, DEGREES_FILE, COMPACT_MAP_FILE, MANIFEST_FILE, "retention.json"]
                .iter()
                .map(|f| args.out.join(f))
                .collect(),
            counters: Counters { records: raw_counts.edges, skips: raw_counts.edges - kept.edges, errors: 0 },
        })
    })?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsFile {
    pub snapshot_id: Option<String>,
    pub stats: StatsReport,
}

/// Mean degree and density for bare counts, no graph needed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormulaStats {
    pub n_nodes: u64,
    pub n_edges: u64,
    pub mean_degree: f64,
    pub edge_density: f64,
}

pub fn stats(args: StatsArgs, ctx: &Context) -> anyhow::Result<()> {
    if let (Some(nodes), Some(edges)) = (args.nodes, args.edges) {
        let f = FormulaStats {
            n_nodes: nodes,
            n_edges: edges,
            mean_degree: mean_degree(nodes, edges).input(|| "mean degree".to_string())?,
            edge_density: edge_density(nodes, edges).input(|| "edge density".to_string())?,
        };
        println!("Mean degree   {:.2}\nEdge density  {}", f.mean_degree, scientific(f.edge_density));
        if let Some(out) = &args.out {
            let spec = JobSpec {
                command: "stats",
                inputs: Vec::new(),
                config: settings(&args, json!({})),
                manifest_path: file_manifest(out),
                force: ctx.force,
            };
            run_job(spec, || {
                write_json(out, STATS_FORMAT, &f)?;
                Ok(JobOutput { outputs: vec![out.clone()], counters: Counters::default() })
            })?;
        }
        return Ok(());
    }

    let snapshot = open_snapshot(args.snapshot.as_deref().expect("clap requires --snapshot here"))?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| snapshot.base.join("stats.json"));
    let spec = JobSpec {
        command: "stats",
        inputs: vec![snapshot.base.join(MANIFEST_FILE), snapshot.resolve(&snapshot.manifest.files.degrees)],
        config: settings(&args, json!({ "out": out })),
        manifest_path: file_manifest(&out),
        force: ctx.force,
    };
    run_job(spec, || {
        let degrees = snapshot.degrees().input(|| "reading degree table".to_string())?;
        let stats = compute_stats(&degrees).input(|| "computing statistics".to_string())?;
        let file = StatsFile { snapshot_id: Some(snapshot.manifest.snapshot_id.clone()), stats };
        write_json(&out, STATS_FORMAT, &file)?;
        Ok(JobOutput { outputs: vec![out.clone()], counters: Counters { records: degrees.n(), ..Counters::default() } })
    })?;
    // The table is the point of this command, so show it on reruns too.
    let file: StatsFile = credigraph_core::artifact::read_json(&out, STATS_FORMAT)?;
    print!("{}", file.stats.to_table(&snapshot.manifest.snapshot_id));
    Ok(())
}

pub fn diff(args: DiffArgs, ctx: &Context) -> anyhow::Result<()> {
    let prev = open_snapshot(&args.prev)?;
    let next = open_snapshot(&args.next)?;
    let inputs = [&prev, &next]
        .iter()
        .flat_map(|s| {
            [
                s.base.join(MANIFEST_FILE),
                s.dictionary_path(),
                s.resolve(&s.manifest.files.degrees),
            ]
        })
        .collect();
    let spec = JobSpec {
        command: "diff",
        inputs,
        config: settings(&args, json!({})),
        manifest_path: file_manifest(&args.out),
        force: ctx.force,
    };
    run_job(spec, || {
        if prev.manifest.timestamp >= next.manifest.timestamp {
            tracing::warn!(prev = %prev.manifest.timestamp, next = %next.manifest.timestamp, "snapshots are not in time order");
        }
        let d = diff_snapshots(&prev, &next).input(|| "comparing snapshots".to_string())?;
        let report = json!({
            "prev": prev.manifest.snapshot_id,
            "next": next.manifest.snapshot_id,
            "diff": d,
        });
        write_json(&args.out, DIFF_FORMAT, &report)?;
        match d.out_degree_increased_fraction {
            Some(f) => println!(
                "{} shared nodes, {} new, {} vanished; out-degree rose for {} ({:.2}%)",
                d.overlap_nodes,
                d.new_nodes,
                d.vanished_nodes,
                d.out_degree_increased,
                100.0 * f
            ),
            None => println!("no shared nodes; {} new, {} vanished", d.new_nodes, d.vanished_nodes),
        }
        Ok(JobOutput {
            outputs: vec![args.out.clone()],
            counters: Counters { records: d.overlap_nodes + d.new_nodes + d.vanished_nodes, ..Counters::default() },
        })
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_index_order() {
        let out = parallel_map(100, 7, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel_map(0, 4, |i| i).is_empty());
    }
}
