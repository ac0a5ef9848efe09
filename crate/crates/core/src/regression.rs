//! Credibility-score regression from domain embeddings: a mean predictor and
//! a small fully connected regressor, both scored by mean absolute error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::artifact::{read_json, write_json, ArtifactError};
use crate::embedding::EmbeddingMatrix;
use crate::host::NodeKey;
use crate::labels::{CredibilityLabel, RegressionSplit, Target};
use crate::rng::SplitMix64;

pub const HISTOGRAM_BINS: usize = 20;
pub const MODEL_FORMAT: &str = "CGMODEL1";

#[derive(Debug, thiserror::Error)]
pub enum RegressionError {
    #[error("{0}")]
    Parameter(String),
    #[error("{0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// Anything that maps a feature matrix (one row per node) to raw scores.
pub trait Predictor {
    fn predict(&self, features: &Array2<f64>) -> Array1<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanPredictor {
    pub mean: f64,
}

impl MeanPredictor {
    pub fn fit(train_labels: &[f64]) -> Result<Self, RegressionError> {
        if train_labels.is_empty() {
            return Err(RegressionError::Parameter("mean predictor needs at least one training label".into()));
        }
        Ok(MeanPredictor { mean: train_labels.iter().sum::<f64>() / train_labels.len() as f64 })
    }
}

impl Predictor for MeanPredictor {
    fn predict(&self, features: &Array2<f64>) -> Array1<f64> {
        Array1::from_elem(features.nrows(), self.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop after this many iterations without a better validation MAE.
    pub patience: usize,
    /// Scales the output layer's initial weight bound. At 0 the untrained
    /// network is exactly the mean predictor.
    pub output_init_gain: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_dims: vec![128, 64],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 200,
            patience: 20,
            output_init_gain: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    w: Array2<f64>,
    b: Array1<f64>,
}

/// ReLU hidden layers followed by a single linear output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    /// He-uniform weights, `U(-a, a)` with `a = sqrt(6/fan_in)`, drawn layer by
    /// layer in row-major order from `SplitMix64::new(seed)`; the output
    /// layer's bound is multiplied by `output_gain`. Biases start at zero
    /// except the output bias, which starts at `output_bias`.
    pub fn init(input_dim: usize, hidden: &[usize], seed: u64, output_gain: f64, output_bias: f64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let n_layers = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(li, d)| {
                let gain = if li == n_layers - 1 { output_gain } else { 1.0 };
                let limit = gain * (6.0 / d[0] as f64).sqrt();
                let w = Array2::from_shape_simple_fn((d[0], d[1]), || (2.0 * rng.next_f64() - 1.0) * limit);
                Dense { w, b: Array1::zeros(d[1]) }
            })
            .collect::<Vec<_>>();
        let mut mlp = Mlp { layers };
        mlp.layers.last_mut().unwrap().b[0] = output_bias;
        mlp
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    /// Activations of every layer; the last entry is the `(n, 1)` output.
    fn forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z.clone());
            h = z;
        }
        acts
    }

    /// Gradients of the mean squared error for every layer.
    fn gradients(&self, x: &Array2<f64>, y: &Array1<f64>) -> Vec<Dense> {
        let acts = self.forward(x);
        let n = x.nrows() as f64;
        let out = acts.last().unwrap().column(0).to_owned();
        let mut delta = ((&out - y) * (2.0 / n)).insert_axis(Axis(1));
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            grads.push(Dense { w: input.t().dot(&delta), b: delta.sum_axis(Axis(0)) });
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].w.t());
                ndarray::Zip::from(&mut back).and(&acts[i - 1]).for_each(|g, &a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        grads
    }
}

impl Predictor for Mlp {
    fn predict(&self, features: &Array2<f64>) -> Array1<f64> {
        self.forward(features).pop().unwrap().column(0).to_owned()
    }
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn new(model: &Mlp) -> Self {
        let zeros = || {
            model
                .layers
                .iter()
                .map(|l| Dense { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) })
                .collect::<Vec<_>>()
        };
        Adam { m: zeros(), v: zeros(), t: 0 }
    }

    fn step(&mut self, model: &mut Mlp, grads: &[Dense], c: &MlpConfig) {
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            *p -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
        };
        for (((layer, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut layer.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .and(&g.w)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .and(&g.b)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

/// Features and labels of a node list, in list order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub nodes: Vec<NodeKey>,
    pub features: Array2<f64>,
    pub labels: Array1<f64>,
}

/// Scores of `target`, keyed by node.
pub fn label_map(labels: &[CredibilityLabel], target: Target) -> BTreeMap<NodeKey, f64> {
    labels
        .iter()
        .filter_map(|l| l.score(target).map(|s| (l.node.clone(), s)))
        .collect()
}

/// Gathers rows for `nodes`; any node without a feature row or label is a
/// data error.
pub fn gather(
    features: &EmbeddingMatrix,
    labels: &BTreeMap<NodeKey, f64>,
    nodes: &[NodeKey],
) -> Result<Dataset, RegressionError> {
    let mut x = Array2::zeros((nodes.len(), features.dim));
    let mut y = Array1::zeros(nodes.len());
    let mut missing_rows = Vec::new();
    let mut missing_labels = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        match features.get(node) {
            Some(row) => x.row_mut(i).iter_mut().zip(row).for_each(|(d, &s)| *d = s as f64),
            None => missing_rows.push(node.as_str()),
        }
        match labels.get(node) {
            Some(&s) => y[i] = s,
            None => missing_labels.push(node.as_str()),
        }
    }
    if !missing_rows.is_empty() || !missing_labels.is_empty() {
        return Err(RegressionError::Data(format!(
            "{} node(s) without a feature row (first: {:?}), {} without a label (first: {:?})",
            missing_rows.len(),
            missing_rows.first(),
            missing_labels.len(),
            missing_labels.first()
        )));
    }
    Ok(Dataset { nodes: nodes.to_vec(), features: x, labels: y })
}

/// Mean of `|clamp(p, 0, 1) - y|`.
pub fn mae(predictions: &Array1<f64>, labels: &Array1<f64>) -> Result<f64, RegressionError> {
    if labels.is_empty() {
        return Err(RegressionError::Parameter("MAE over an empty node list is undefined".into()));
    }
    if predictions.len() != labels.len() {
        return Err(RegressionError::Data("prediction and label counts differ".into()));
    }
    let total: f64 = predictions.iter().zip(labels).map(|(p, y)| (p.clamp(0.0, 1.0) - y).abs()).sum();
    Ok(total / labels.len() as f64)
}

pub fn evaluate_mae(model: &dyn Predictor, data: &Dataset) -> Result<f64, RegressionError> {
    mae(&model.predict(&data.features), &data.labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub target: Target,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub mae_test: f64,
    pub mae_val: f64,
    pub baseline_mae_test: f64,
    pub baseline_mae_val: f64,
    pub iterations_run: usize,
    /// Iteration whose weights were kept; 0 means the initial weights.
    pub best_iteration: usize,
    pub config: MlpConfig,
}

pub struct TrainedModels {
    pub mlp: Mlp,
    pub baseline: MeanPredictor,
    pub report: RegressionReport,
}

/// Full-batch Adam on squared error, early-stopped on validation MAE; the
/// best validation weights are restored before testing.
pub fn train_mlp(
    features: &EmbeddingMatrix,
    labels: &[CredibilityLabel],
    split: &RegressionSplit,
    config: &MlpConfig,
) -> Result<TrainedModels, RegressionError> {
    if config.hidden_dims.contains(&0) || config.learning_rate <= 0.0 {
        return Err(RegressionError::Parameter("hidden dims and learning rate must be positive".into()));
    }
    let scores = label_map(labels, split.target);
    let train = gather(features, &scores, &split.train)?;
    let val = gather(features, &scores, &split.val)?;
    let test = gather(features, &scores, &split.test)?;
    if val.nodes.is_empty() || test.nodes.is_empty() {
        return Err(RegressionError::Parameter("validation and test sets must be non-empty".into()));
    }
    let baseline = MeanPredictor::fit(train.labels.as_slice().unwrap())?;

    let mut model = Mlp::init(features.dim, &config.hidden_dims, config.seed, config.output_init_gain, baseline.mean);
    let mut adam = Adam::new(&model);
    let mut best = (evaluate_mae(&model, &val)?, 0usize, model.clone());
    let mut iterations_run = 0;
    for it in 1..=config.max_iterations {
        let grads = model.gradients(&train.features, &train.labels);
        adam.step(&mut model, &grads, config);
        iterations_run = it;
        let v = evaluate_mae(&model, &val)?;
        if !v.is_finite() {
            return Err(RegressionError::Data(format!("validation MAE diverged at iteration {it}")));
        }
        if v < best.0 {
            best = (v, it, model.clone());
        } else if it - best.1 >= config.patience {
            break;
        }
    }
    let (mae_val, best_iteration, mlp) = best;
    let report = RegressionReport {
        target: split.target,
        seed: config.seed,
        n_train: train.nodes.len(),
        n_val: val.nodes.len(),
        n_test: test.nodes.len(),
        mae_test: evaluate_mae(&mlp, &test)?,
        mae_val,
        baseline_mae_test: evaluate_mae(&baseline, &test)?,
        baseline_mae_val: evaluate_mae(&baseline, &val)?,
        iterations_run,
        best_iteration,
        config: config.clone(),
    };
    Ok(TrainedModels { mlp, baseline, report })
}

/// One results-table row: mean MAE per target over seeds, with the sample
/// standard deviation per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub method: String,
    pub pc1_mae: Option<f64>,
    pub mbfc_mae: Option<f64>,
    pub std: BTreeMap<Target, f64>,
    pub seeds: Vec<u64>,
}

pub fn results_row(method: &str, reports: &[RegressionReport], baseline: bool) -> ResultsRow {
    let mut per_target: BTreeMap<Target, Vec<f64>> = BTreeMap::new();
    let mut seeds = Vec::new();
    for r in reports {
        per_target
            .entry(r.target)
            .or_default()
            .push(if baseline { r.baseline_mae_test } else { r.mae_test });
        if !seeds.contains(&r.seed) {
            seeds.push(r.seed);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = per_target
        .iter()
        .map(|(t, v)| {
            let m = mean(v);
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
            } else {
                0.0
            };
            (*t, var.sqrt())
        })
        .collect();
    ResultsRow {
        method: method.to_string(),
        pc1_mae: per_target.get(&Target::Pc1).map(|v| mean(v)),
        mbfc_mae: per_target.get(&Target::Mbfc).map(|v| mean(v)),
        std,
        seeds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count_true: u64,
    pub count_pred: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    /// `(true, predicted)`, predictions clamped to `[0, 1]`.
    pub pairs: Vec<(f64, f64)>,
    pub histogram: Vec<HistogramBin>,
}

/// Index of the equal-width bin over `[0, 1]` holding `x`; 1.0 falls in the
/// last bin.
pub fn bin_index(x: f64, bins: usize) -> usize {
    ((x.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

pub fn export_plot_data(model: &dyn Predictor, data: &Dataset) -> PlotData {
    let predicted = model.predict(&data.features);
    let pairs: Vec<(f64, f64)> = data.labels.iter().zip(&predicted).map(|(&t, &p)| (t, p.clamp(0.0, 1.0))).collect();
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            bin_low: i as f64 / HISTOGRAM_BINS as f64,
            bin_high: (i + 1) as f64 / HISTOGRAM_BINS as f64,
            count_true: 0,
            count_pred: 0,
        })
        .collect();
    for &(t, p) in &pairs {
        histogram[bin_index(t, HISTOGRAM_BINS)].count_true += 1;
        histogram[bin_index(p, HISTOGRAM_BINS)].count_pred += 1;
    }
    PlotData { pairs, histogram }
}

impl PlotData {
    pub fn write_csv(&self, scatter: impl AsRef<Path>, histogram: impl AsRef<Path>) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(scatter)?);
        writeln!(out, "true,predicted")?;
        for (t, p) in &self.pairs {
            writeln!(out, "{t},{p}")?;
        }
        out.flush()?;
        let mut out = BufWriter::new(File::create(histogram)?);
        writeln!(out, "bin_low,bin_high,count_true,count_pred")?;
        for b in &self.histogram {
            writeln!(out, "{},{},{},{}", b.bin_low, b.bin_high, b.count_true, b.count_pred)?;
        }
        out.flush()
    }
}

/// On-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SavedModel {
    Mean { mean: f64 },
    Mlp { layers: Vec<SavedLayer> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedLayer {
    /// `weights[i][j]` connects input `i` to output `j`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl From<&Mlp> for SavedModel {
    fn from(m: &Mlp) -> Self {
        SavedModel::Mlp {
            layers: m
                .layers
                .iter()
                .map(|l| SavedLayer {
                    weights: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        }
    }
}

impl SavedModel {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RegressionError> {
        Ok(write_json(path, MODEL_FORMAT, self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, RegressionError> {
        Ok(read_json(path, MODEL_FORMAT)?)
    }

    pub fn into_predictor(self) -> Result<Box<dyn Predictor>, RegressionError> {
        match self {
            SavedModel::Mean { mean } => Ok(Box::new(MeanPredictor { mean })),
            SavedModel::Mlp { layers } => {
                let mut dense = Vec::with_capacity(layers.len());
                let mut fan_in = None;
                for l in layers {
                    let rows = l.weights.len();
                    let cols = l.bias.len();
                    if fan_in.is_some_and(|f| f != rows) || l.weights.iter().any(|r| r.len() != cols) {
                        return Err(RegressionError::Data("inconsistent layer shapes in model file".into()));
                    }
                    let w = Array2::from_shape_vec((rows, cols), l.weights.concat())
                        .map_err(|e| RegressionError::Data(e.to_string()))?;
                    dense.push(Dense { w, b: Array1::from(l.bias) });
                    fan_in = Some(cols);
                }
                if dense.is_empty() || fan_in != Some(1) {
                    return Err(RegressionError::Data("model must end in a single output unit".into()));
                }
                Ok(Box::new(Mlp { layers: dense }))
            }
        }
    }
}
