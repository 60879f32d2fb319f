mod common;

use nalgebra::DVector;
use phenotl::data::split;
use phenotl::evaluate::rmse;
use phenotl::linalg::JitteredCholesky;
use phenotl::mlp::{fine_tune, train, FineTuneConfig, MlpArchitecture, TrainConfig};
use phenotl::nngp::{kernel_matrix, select_noise, NngpParams};
use phenotl::simulator::{generate, SimulatorConfig};

use common::{randn, randn_vec};

#[test]
fn noise_grid_recovers_generating_noise() {
    let p = NngpParams::default();
    let grid = [0.01, 0.1, 1.0];
    let mut hits = 0;
    for seed in 0..10u64 {
        let x = randn(200, 5, seed);
        let k = kernel_matrix(&x, &x, &p).unwrap();
        let chol = JitteredCholesky::factor(&k, &DVector::zeros(200)).unwrap();
        let f = &chol.lower * randn_vec(200, 100 + seed);
        let y = f + randn_vec(200, 200 + seed) * 0.1f64.sqrt();
        hits += usize::from(select_noise(&x, &y, &p, &grid).unwrap() == 0.1);
    }
    assert!(hits >= 8, "selected the generating noise in {hits}/10 seeds");
}

#[test]
fn pure_noise_selects_the_largest_variance() {
    let p = NngpParams::default();
    let grid = [0.01, 0.1, 1.0];
    let mut hits = 0;
    for seed in 0..10u64 {
        let x = randn(200, 5, seed);
        let y = randn_vec(200, 300 + seed);
        hits += usize::from(select_noise(&x, &y, &p, &grid).unwrap() == 1.0);
    }
    assert!(hits >= 8, "selected the grid maximum in {hits}/10 seeds");
}

/// Source and target from one simulator config: fine-tuning a pretrained
/// network beats training from scratch on 5% of the target set.
#[test]
fn pretraining_helps_on_same_distribution() {
    let cfg = SimulatorConfig::default_config();
    let source = generate(&cfg.clone().with_seed(31), 400).unwrap();
    let target = generate(&cfg.clone().with_seed(32), 400).unwrap();
    let arch = MlpArchitecture::with_hidden(source.n_bands(), &[64, 64]).unwrap();
    let train_cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let pretrained = train(source.x(), source.y(), &arch, &train_cfg).unwrap();
    let (mut scratch_total, mut tuned_total) = (0.0, 0.0);
    for seed in 1..=5u64 {
        let parts = split(&target, 0.05, seed).unwrap();
        let scratch = train(parts.train.x(), parts.train.y(), &arch, &TrainConfig { seed, ..train_cfg }).unwrap();
        let tuned = fine_tune(&pretrained, parts.train.x(), parts.train.y(), &FineTuneConfig { seed, ..Default::default() }).unwrap();
        scratch_total += rmse(parts.test.y(), &scratch.predict(parts.test.x()).unwrap()).unwrap();
        tuned_total += rmse(parts.test.y(), &tuned.predict(parts.test.x()).unwrap()).unwrap();
    }
    assert!(tuned_total <= scratch_total, "fine-tuned {} vs scratch {}", tuned_total / 5.0, scratch_total / 5.0);
}
