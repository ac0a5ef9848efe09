use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use credigraph_core::artifact::{read_json, write_json};
use credigraph_core::embedding::EmbeddingMatrix;
use credigraph_core::graph::{NodeDictionary, NodeId};
use credigraph_core::host::NodeKey;
use credigraph_core::labels::{join_labels as join, load_dqr, stratified_split_with, CredibilityLabel, LoadReport, RegressionSplit, Target};
use credigraph_core::regression::{
    evaluate_mae, export_plot_data, gather, label_map, results_row, train_mlp as fit, MlpConfig, RegressionReport,
    SavedModel,
};
use credigraph_core::temporal::MANIFEST_FILE;

use super::graph::open_snapshot;
use super::{
    settings, Context, ExportArgs, JoinLabelsArgs, SplitArgs, TrainMlpArgs, GNN_INPUTS_FORMAT, LABELS_FORMAT, REPORT_FORMAT,
    RESULTS_FORMAT,
};
use crate::config::ensure_dir;
use crate::error::{input_error, InputContext};
use crate::job::{dir_manifest, file_manifest, run_job, Counters, JobOutput, JobSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedLabel {
    pub node_id: NodeId,
    pub node: NodeKey,
    pub pc1: Option<f64>,
    pub mbfc: Option<f64>,
}

/// Labels matched onto one snapshot's node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedLabels {
    pub snapshot_id: String,
    pub labels: Vec<JoinedLabel>,
    pub unmatched: Vec<NodeKey>,
    pub load: LoadReport,
}

impl JoinedLabels {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        read_json(path, LABELS_FORMAT).input(|| format!("reading labels {}", path.display()))
    }

    pub fn credibility(&self) -> Vec<CredibilityLabel> {
        self.labels
            .iter()
            .map(|l| CredibilityLabel { node: l.node.clone(), pc1: l.pc1, mbfc: l.mbfc })
            .collect()
    }
}

pub fn join_labels(args: JoinLabelsArgs, ctx: &Context) -> anyhow::Result<()> {
    let snapshot = open_snapshot(&args.snapshot)?;
    let spec = JobSpec {
        command: "join-labels",
        inputs: vec![args.labels.clone(), snapshot.dictionary_path()],
        config: settings(&args, json!({})),
        manifest_path: file_manifest(&args.out),
        force: ctx.force,
    };
    run_job(spec, || {
        let (labels, load) = load_dqr(&args.labels).input(|| format!("reading {}", args.labels.display()))?;
        for r in &load.rejected {
            tracing::warn!(line = r.line, reason = %r.reason, "label row rejected");
        }
        let dictionary = NodeDictionary::read(snapshot.dictionary_path()).input(|| "reading snapshot dictionary".to_string())?;
        let (joined, matching) = join(&dictionary, &labels);
        let out = JoinedLabels {
            snapshot_id: snapshot.manifest.snapshot_id.clone(),
            labels: joined
                .into_iter()
                .map(|(node_id, l)| JoinedLabel { node_id, node: l.node, pc1: l.pc1, mbfc: l.mbfc })
                .collect(),
            unmatched: matching.unmatched,
            load,
        };
        write_json(&args.out, LABELS_FORMAT, &out)?;
        println!(
            "{} of {} label rows matched a node ({} unmatched, {} rejected)",
            matching.matched,
            out.load.rows,
            out.unmatched.len(),
            out.load.rejected.len()
        );
        Ok(JobOutput {
            outputs: vec![args.out.clone()],
            counters: Counters {
                records: out.load.rows,
                errors: out.load.rejected.len() as u64,
                skips: out.unmatched.len() as u64,
            },
        })
    })?;
    Ok(())
}

fn read_embeddings(path: &Path) -> anyhow::Result<EmbeddingMatrix> {
    EmbeddingMatrix::read(path).input(|| format!("reading embeddings {}", path.display()))
}

pub fn split(args: SplitArgs, ctx: &Context) -> anyhow::Result<()> {
    let seed = args.seed.unwrap_or(ctx.config.seed);
    let ratios = args.ratios.unwrap_or(ctx.config.split);
    let mut inputs = vec![args.labels.clone()];
    inputs.extend(args.embeddings.clone());
    let spec = JobSpec {
        command: "split",
        inputs,
        config: settings(&args, json!({ "seed": seed, "ratios": ratios })),
        manifest_path: file_manifest(&args.out),
        force: ctx.force,
    };
    run_job(spec, || {
        let joined = JoinedLabels::read(&args.labels)?;
        let mut labels = joined.credibility();
        let total = labels.len() as u64;
        if let Some(path) = &args.embeddings {
            let m = read_embeddings(path)?;
            labels.retain(|l| m.get(&l.node).is_some());
        }
        let dropped = total - labels.len() as u64;
        let split = stratified_split_with(&labels, args.target, seed, ratios).input(|| "splitting labels".to_string())?;
        split.write(&args.out)?;
        println!(
            "{} split: {} train, {} val, {} test ({} labelled nodes without embeddings left out)",
            args.target,
            split.train.len(),
            split.val.len(),
            split.test.len(),
            dropped
        );
        Ok(JobOutput {
            outputs: vec![args.out.clone()],
            counters: Counters {
                records: (split.train.len() + split.val.len() + split.test.len()) as u64,
                skips: dropped,
                errors: 0,
            },
        })
    })?;
    Ok(())
}

fn read_split(path: &Path) -> anyhow::Result<RegressionSplit> {
    RegressionSplit::read(path).input(|| format!("reading split {}", path.display()))
}

/// `report.json` of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub embeddings_provider: String,
    pub embedding_dim: usize,
    pub report: RegressionReport,
}

pub fn train_mlp(args: TrainMlpArgs, ctx: &Context) -> anyhow::Result<()> {
    let seed = args.seed.unwrap_or(ctx.config.seed);
    let mut config = MlpConfig { seed, ..MlpConfig::default() };
    if let Some(n) = args.max_iterations {
        config.max_iterations = n;
    }
    ensure_dir(&args.out)?;
    let spec = JobSpec {
        command: "train-mlp",
        inputs: vec![args.embeddings.clone(), args.labels.clone(), args.split.clone()],
        config: settings(&args, serde_json::to_value(&config)?),
        manifest_path: dir_manifest(&args.out, "train-mlp"),
        force: ctx.force,
    };
    run_job(spec, || {
        let split = read_split(&args.split)?;
        if let Some(t) = args.target {
            if t != split.target {
                return Err(input_error(format!("--target {t} does not match the split's target {}", split.target)));
            }
        }
        let features = read_embeddings(&args.embeddings)?;
        let labels = JoinedLabels::read(&args.labels)?.credibility();
        let trained = fit(&features, &labels, &split, &config).input(|| "training".to_string())?;
        let r = &trained.report;

        let report = TrainingReport {
            embeddings_provider: features.provider_tag.clone(),
            embedding_dim: features.dim,
            report: r.clone(),
        };
        write_json(args.out.join("report.json"), REPORT_FORMAT, &report)?;
        SavedModel::from(&trained.mlp).write(args.out.join("model.json"))?;
        SavedModel::Mean { mean: trained.baseline.mean }.write(args.out.join("baseline.json"))?;
        let rows = vec![
            results_row("MLP", std::slice::from_ref(r), false),
            results_row("Mean baseline", std::slice::from_ref(r), true),
        ];
        write_json(args.out.join("results.json"), RESULTS_FORMAT, &json!({ "rows": rows }))?;
        println!(
            "{} test MAE {:.4} (mean baseline {:.4}); best iteration {} of {}",
            r.target, r.mae_test, r.baseline_mae_test, r.best_iteration, r.iterations_run
        );
        Ok(JobOutput {
            outputs: ["report.json", "model.json", "baseline.json", "results.json"]
                .iter()
                .map(|f| args.out.join(f))
                .collect(),
            counters: Counters { records: (r.n_train + r.n_val + r.n_test) as u64, ..Counters::default() },
        })
    })?;
    Ok(())
}

/// Everything a graph-model run needs, with absolute paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnInputs {
    pub snapshot_manifest: PathBuf,
    pub edges: PathBuf,
    pub dictionary: PathBuf,
    pub embeddings: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
    pub target: Target,
    pub fanouts: Vec<usize>,
    pub mlp_test_mae: f64,
    pub baseline_test_mae: f64,
}

fn absolute(p: &Path) -> anyhow::Result<PathBuf> {
    std::fs::canonicalize(p).input(|| format!("resolving {}", p.display()))
}

pub fn export(args: ExportArgs, ctx: &Context) -> anyhow::Result<()> {
    let fanouts = args.fanouts.clone().unwrap_or_else(|| ctx.config.fanouts.clone());
    if fanouts.is_empty() || fanouts.contains(&0) {
        return Err(input_error("fanouts must be a non-empty list of positive numbers"));
    }
    let snapshot = open_snapshot(&args.snapshot)?;
    ensure_dir(&args.out)?;
    let model_path = args.run.join("model.json");
    let spec = JobSpec {
        command: "export",
        inputs: vec![
            model_path.clone(),
            args.run.join("baseline.json"),
            args.embeddings.clone(),
            args.labels.clone(),
            args.split.clone(),
            snapshot.base.join(MANIFEST_FILE),
        ],
        config: settings(&args, json!({ "fanouts": fanouts })),
        manifest_path: dir_manifest(&args.out, "export"),
        force: ctx.force,
    };
    run_job(spec, || {
        let model = SavedModel::read(&model_path)
            .input(|| format!("reading {}", model_path.display()))?
            .into_predictor()
            .input(|| format!("loading {}", model_path.display()))?;
        let baseline = SavedModel::read(args.run.join("baseline.json"))
            .input(|| "reading baseline model".to_string())?
            .into_predictor()?;
        let split = read_split(&args.split)?;
        let features = read_embeddings(&args.embeddings)?;
        let labels = JoinedLabels::read(&args.labels)?.credibility();
        let test = gather(&features, &label_map(&labels, split.target), &split.test).input(|| "gathering test rows".to_string())?;

        let plot = export_plot_data(model.as_ref(), &test);
        plot.write_csv(args.out.join("scatter.csv"), args.out.join("histogram.csv"))?;
        let inputs = GnnInputs {
            snapshot_manifest: absolute(&snapshot.base.join(MANIFEST_FILE))?,
            edges: absolute(&snapshot.edges_path())?,
            dictionary: absolute(&snapshot.dictionary_path())?,
            embeddings: absolute(&args.embeddings)?,
            labels: absolute(&args.labels)?,
            split: absolute(&args.split)?,
            target: split.target,
            fanouts,
            mlp_test_mae: evaluate_mae(model.as_ref(), &test)?,
            baseline_test_mae: evaluate_mae(baseline.as_ref(), &test)?,
        };
        write_json(args.out.join("gnn_inputs.json"), GNN_INPUTS_FORMAT, &inputs)?;
        println!(
            "exported {} test predictions (MAE {:.4}, baseline {:.4})",
            plot.pairs.len(),
            inputs.mlp_test_mae,
            inputs.baseline_test_mae
        );
        Ok(JobOutput {
            outputs: ["scatter.csv", "histogram.csv", "gnn_inputs.json"].iter().map(|f| args.out.join(f)).collect(),
            counters: Counters { records: plot.pairs.len() as u64, ..Counters::default() },
        })
    })?;
    Ok(())
}
