use credigraph_core::fixtures::{noise_task, signal_task};
use credigraph_core::labels::{stratified_split, Target};
use credigraph_core::regression::{
    evaluate_mae, export_plot_data, label_map, train_mlp, Dataset, MlpConfig, Predictor, HISTOGRAM_BINS,
};
use credigraph_core::rng::SplitMix64;
use ndarray::{Array1, Array2};

fn direct_mean_baseline(labels: &[f64], test: &[f64]) -> f64 {
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    test.iter().map(|y| (y - mean).abs()).sum::<f64>() / test.len() as f64
}

#[test]
fn signal_task_beats_baseline() {
    let mut wins = 0;
    for seed in 1..=10u64 {
        let task = signal_task(2000, 32, 0.05, seed);
        let split = stratified_split(&task.labels, Target::Pc1, seed).unwrap();
        let config = MlpConfig { seed, ..Default::default() };
        let trained = train_mlp(&task.features, &task.labels, &split, &config).unwrap();
        let r = &trained.report;
        let scores = label_map(&task.labels, Target::Pc1);
        let train: Vec<f64> = split.train.iter().map(|k| scores[k]).collect();
        let test: Vec<f64> = split.test.iter().map(|k| scores[k]).collect();
        let oracle = direct_mean_baseline(&train, &test);
        assert!((oracle - r.baseline_mae_test).abs() < 1e-12);
        if r.mae_test < 0.6 * r.baseline_mae_test {
            wins += 1;
        }
    }
    assert!(wins >= 9, "{wins}/10");
}

#[test]
fn noise_task_matches_baseline() {
    let task = noise_task(2000, 32, 5);
    let split = stratified_split(&task.labels, Target::Pc1, 5).unwrap();
    let trained = train_mlp(&task.features, &task.labels, &split, &MlpConfig { seed: 5, ..Default::default() }).unwrap();
    let r = &trained.report;
    assert!((r.mae_test - r.baseline_mae_test).abs() <= 0.1 * r.baseline_mae_test);
}

#[test]
fn training_is_deterministic() {
    let task = signal_task(300, 8, 0.05, 3);
    let split = stratified_split(&task.labels, Target::Pc1, 3).unwrap();
    let config = MlpConfig { seed: 9, ..Default::default() };
    let a = train_mlp(&task.features, &task.labels, &split, &config).unwrap();
    let b = train_mlp(&task.features, &task.labels, &split, &config).unwrap();
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
}

#[test]
fn constant_labels_are_learned() {
    let mut task = signal_task(200, 8, 0.0, 4);
    for l in &mut task.labels {
        l.pc1 = Some(0.5);
    }
    let split = stratified_split(&task.labels, Target::Pc1, 1).unwrap();
    let r = train_mlp(&task.features, &task.labels, &split, &MlpConfig::default()).unwrap().report;
    assert!(r.mae_test <= 0.02, "{}", r.mae_test);
}

#[test]
fn missing_feature_row_is_a_data_error() {
    let mut task = signal_task(50, 4, 0.05, 2);
    let split = stratified_split(&task.labels, Target::Pc1, 1).unwrap();
    task.features.rows.remove(&split.test[0]);
    assert!(train_mlp(&task.features, &task.labels, &split, &MlpConfig::default()).is_err());
}

struct Fixed(Array1<f64>);

impl Predictor for Fixed {
    fn predict(&self, _: &Array2<f64>) -> Array1<f64> {
        self.0.clone()
    }
}

#[test]
// The oracle spells the clamp out so it does not share code with the implementation.
#[allow(clippy::manual_clamp)]
fn mae_and_histograms_match_direct_loops() {
    let mut rng = SplitMix64::new(12);
    let n = 100;
    let preds: Vec<f64> = (0..n).map(|_| rng.next_f64() * 1.4 - 0.2).collect();
    let labels: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
    let data = Dataset { nodes: vec![], features: Array2::zeros((n, 1)), labels: Array1::from(labels.clone()) };
    let model = Fixed(Array1::from(preds.clone()));
    let mut total = 0.0;
    for i in 0..n {
        let p = if preds[i] < 0.0 { 0.0 } else if preds[i] > 1.0 { 1.0 } else { preds[i] };
        total += (p - labels[i]).abs();
    }
    assert!((evaluate_mae(&model, &data).unwrap() - total / n as f64).abs() < 1e-12);

    let plot = export_plot_data(&model, &data);
    for (b, bin) in plot.histogram.iter().enumerate() {
        let inside = |x: f64| {
            let x = x.clamp(0.0, 1.0);
            let lo = b as f64 / HISTOGRAM_BINS as f64;
            let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
            x >= lo && (x < hi || (b == HISTOGRAM_BINS - 1 && x <= 1.0))
        };
        assert_eq!(bin.count_true, labels.iter().filter(|&&x| inside(x)).count() as u64);
        assert_eq!(bin.count_pred, preds.iter().filter(|&&x| inside(x)).count() as u64);
    }
    let dir = tempfile::tempdir().unwrap();
    plot.write_csv(dir.path().join("s.csv"), dir.path().join("h.csv")).unwrap();
    let h = std::fs::read_to_string(dir.path().join("h.csv")).unwrap();
    assert!(h.starts_with("bin_low,bin_high,count_true,count_pred\n"));
    assert_eq!(h.lines().count(), HISTOGRAM_BINS + 1);
}
