use std::path::Path;

use nalgebra::DVector;
use phenotl::data::{save_csv, split, Domain};
use phenotl::experiment::{run, ExperimentConfig};
use phenotl::simulator::{generate, SimulatorConfig};

fn config(dir: &Path, csv: &str, methods: &str) -> ExperimentConfig {
    let text = format!(
        r#"
output_dir = "out"
methods = [{methods}]
fractions = [0.1, 0.3]
seeds = [4, 5]
save_predictions = true

[target]
csv = "{csv}"

[source]
simulator = "default"
n = 60
seed = 8
plateau_shift = 0.03

[mlp]
hidden = [16]
max_epochs = 40

[finetune]
max_epochs = 10
"#
    );
    ExperimentConfig::from_toml_str(&text, dir).unwrap()
}

/// Test labels are replaced with a canary value; predictions must not move.
#[test]
fn test_labels_never_reach_training() {
    let dir = tempfile::tempdir().unwrap();
    let target = generate(&SimulatorConfig::default_config().with_seed(21), 80).unwrap();
    save_csv(&target, dir.path().join("clean.csv")).unwrap();

    let methods = r#""plsr", "mlp", "nngp", "mlp-finetune", "transfer-gp""#;
    let clean = run(&config(dir.path(), "clean.csv", methods)).unwrap();
    assert!(clean.rows.iter().all(|r| r.is_ok()));

    for row in &clean.rows {
        let parts = split(&target, row.fraction, row.seed).unwrap();
        let mut y = target.y().clone();
        for &i in &parts.test_indices {
            y[i] = 1.0e6 + i as f64;
        }
        let canary = target.with_labels(y).unwrap();
        save_csv(&canary, dir.path().join("canary.csv")).unwrap();
        let mut cfg = config(dir.path(), "canary.csv", &format!("\"{}\"", row.method.name()));
        cfg.fractions = vec![row.fraction];
        cfg.seeds = vec![row.seed];
        let poisoned = run(&cfg).unwrap();
        let p = &poisoned.rows[0];
        assert!(p.is_ok(), "{:?}", p.error);
        assert_eq!(p.predictions, row.predictions, "{} {} {}", row.method.name(), row.fraction, row.seed);
        assert!(p.metrics.unwrap().rmse > 1.0e5);
    }
}

#[test]
fn prediction_rows_are_the_held_out_rows() {
    let dir = tempfile::tempdir().unwrap();
    let target = generate(&SimulatorConfig::default_config().with_seed(22), 50).unwrap();
    save_csv(&target, dir.path().join("t.csv")).unwrap();
    let report = run(&config(dir.path(), "t.csv", r#""plsr""#)).unwrap();
    for row in &report.rows {
        let parts = split(&target, row.fraction, row.seed).unwrap();
        let idx: Vec<usize> = row.predictions.iter().map(|p| p.0).collect();
        assert_eq!(idx, parts.test_indices);
        assert!(idx.iter().all(|i| parts.train_indices.binary_search(i).is_err()));
        assert_eq!(parts.train_indices.len() + idx.len(), 50);
    }
}

#[test]
fn outputs_written() {
    let dir = tempfile::tempdir().unwrap();
    let target = generate(&SimulatorConfig::default_config().with_seed(23), 40).unwrap();
    save_csv(&target, dir.path().join("t.csv")).unwrap();
    let report = run(&config(dir.path(), "t.csv", r#""nngp", "transfer-gp""#)).unwrap();
    let out = dir.path().join("out");
    report.write(&out).unwrap();
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    // transfer rows are 4..8 in config order
    for row in 4..8 {
        let curve = std::fs::read_to_string(out.join(format!("lambda_curve_{row}.csv"))).unwrap();
        assert_eq!(curve.lines().count(), 12);
    }
    assert!(!out.join("lambda_curve_0.csv").exists());
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn permuted_source_labels_keep_spectra() {
    let spec: phenotl::experiment::DatasetSpec =
        toml::from_str("simulator = \"default\"\nn = 30\nseed = 5\npermute_labels = true\n").unwrap();
    let permuted = spec.load(Path::new("."), Domain::Source).unwrap();
    let plain = generate(&SimulatorConfig::default_config().with_seed(5), 30).unwrap();
    assert_eq!(permuted.x(), plain.x());
    assert_ne!(permuted.y(), plain.y());
    let mut a: Vec<f64> = permuted.y().iter().copied().collect();
    let mut b: Vec<f64> = plain.y().iter().copied().collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert_eq!(DVector::from_vec(a), DVector::from_vec(b));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"));
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name.starts_with("experiment_") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
            n += 1;
        }
    }
    assert_eq!(n, 3);
    SimulatorConfig::load(dir.join("simulator.toml")).unwrap();
    let mlp: phenotl::experiment::MlpSettings = toml::from_str(&std::fs::read_to_string(dir.join("mlp.toml")).unwrap()).unwrap();
    assert_eq!(mlp.hidden, vec![256, 256]);
    let ft: phenotl::experiment::FinetuneSettings = toml::from_str(&std::fs::read_to_string(dir.join("finetune.toml")).unwrap()).unwrap();
    assert_eq!(ft.freeze_layers, 1);
}
