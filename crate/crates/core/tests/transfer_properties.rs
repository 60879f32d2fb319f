mod common;

use nalgebra::DVector;
use phenotl::linalg::{min_eigenvalue, probe};
use phenotl::nngp::{log_marginal_likelihood_from_kernel, NngpParams};
use phenotl::transfer::{
    estimate_lambda, BaseBlocks, KernelApprox, NoiseSearch, TaskNoise, TransferData, TransferGpModel,
};
use proptest::prelude::*;

use common::{randn, randn_vec};

fn instance(ns: usize, nt: usize, d: usize, seed: u64) -> TransferData {
    TransferData::new(randn(ns, d, seed), randn_vec(ns, seed + 1), randn(nt, d, seed + 2), randn_vec(nt, seed + 3)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_lambda_gives_a_valid_covariance(
        ns in 1usize..25, nt in 1usize..25, d in 1usize..8, seed in 0u64..1000,
        lambda in 0.0f64..=1.0, depth in 1usize..4, sw in 0.5f64..3.0, sb in 0.0f64..0.5,
    ) {
        let p = NngpParams::new(depth, sw, sb).unwrap();
        let data = instance(ns, nt, d, seed);
        let blocks = BaseBlocks::compute(&data, &p).unwrap();
        let k = blocks.assemble(lambda).unwrap();
        let combo = blocks.assemble(1.0).unwrap() * lambda + blocks.assemble(0.0).unwrap() * (1.0 - lambda);
        prop_assert!((&k - combo).amax() <= 1e-12);
        prop_assert!(k == k.transpose());
        prop_assert!(min_eigenvalue(&k) >= -1e-8 * k.amax().max(1.0));
    }

    #[test]
    fn exact_lml_matches_direct_evaluation(
        ns in 1usize..15, nt in 1usize..15, seed in 0u64..1000, lambda in 0.0f64..=1.0,
        s in 0.01f64..1.0, t in 0.01f64..1.0,
    ) {
        let p = NngpParams::default();
        let data = instance(ns, nt, 4, seed);
        let noise = TaskNoise { source: s, target: t };
        let est = estimate_lambda(&data, &p, &NoiseSearch::Fixed(noise), &[lambda], KernelApprox::Exact, false).unwrap();
        let k = BaseBlocks::compute(&data, &p).unwrap().assemble(lambda).unwrap();
        let diag = DVector::from_fn(data.n(), |i, _| if i < ns { s } else { t });
        let direct = log_marginal_likelihood_from_kernel(&k, &data.stacked_y(), &diag).unwrap();
        prop_assert!((est.lml[0] - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn posterior_variance_is_nonnegative(seed in 0u64..1000, lambda in 0.0f64..=1.0, m in 1usize..30) {
        let p = NngpParams::default();
        let data = instance(15, 15, 3, seed);
        let xs = randn(8, 3, seed + 9);
        for model in [
            TransferGpModel::fit(data.clone(), lambda, p, TaskNoise::equal(0.01)).unwrap(),
            TransferGpModel::fit_nystrom(data.clone(), lambda, p, TaskNoise::equal(0.01), m, seed).unwrap(),
        ] {
            let (mean, var) = model.predict(&xs).unwrap();
            prop_assert!(mean.iter().all(|v| v.is_finite()));
            prop_assert!(var.iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn nystrom_never_factors_the_full_system() {
    let p = NngpParams::default();
    let data = instance(150, 150, 6, 3);
    for m in [5, 25, 60] {
        probe::reset();
        let model = TransferGpModel::fit_nystrom(data.clone(), 0.5, p, TaskNoise::equal(0.05), m, 1).unwrap();
        model.predict(&randn(20, 6, 4)).unwrap();
        estimate_lambda(&data, &p, &NoiseSearch::Fixed(TaskNoise::equal(0.05)), &[0.0, 0.5, 1.0], KernelApprox::Nystrom { landmarks: m, seed: 1 }, false)
            .unwrap();
        assert!(probe::max_factor_dim() <= m, "m={m}: factored {}", probe::max_factor_dim());
    }
    probe::reset();
    TransferGpModel::fit(data.clone(), 0.5, p, TaskNoise::equal(0.05)).unwrap();
    assert_eq!(probe::max_factor_dim(), 300);
}

#[test]
fn nystrom_predictions_approach_exact() {
    let p = NngpParams::default();
    let data = instance(60, 60, 3, 5);
    let xs = randn(20, 3, 6);
    let noise = TaskNoise { source: 0.05, target: 0.02 };
    let (exact, _) = TransferGpModel::fit(data.clone(), 0.7, p, noise).unwrap().predict(&xs).unwrap();
    let gap = |m: usize| -> f64 {
        (0..5)
            .map(|seed| {
                let (mean, _) = TransferGpModel::fit_nystrom(data.clone(), 0.7, p, noise, m, seed).unwrap().predict(&xs).unwrap();
                (mean - &exact).norm()
            })
            .sum::<f64>()
            / 5.0
    };
    let (small, large) = (gap(10), gap(100));
    assert!(large < small, "{large} vs {small}");
    assert!(gap(120) <= 1e-6);
}
