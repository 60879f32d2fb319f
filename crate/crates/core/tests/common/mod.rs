//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use phenotl::nngp::NngpParams;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub fn randn(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = SmallRng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
}

pub fn randn_vec(n: usize, seed: u64) -> DVector<f64> {
    randn(n, 1, seed).column(0).into_owned()
}

/// Finite-width Monte Carlo estimate of the ReLU network covariance between
/// the outputs at `x` and `x2`, for every depth `1..=p.depth`.
///
/// Each network's hidden layers are sampled unit by unit: given the previous
/// layer, the two preactivations of a unit are exactly bivariate Gaussian with
/// covariance `σ_b² + σ_w²·(empirical second moments of the previous layer)`
/// (the input layer uses `x·x2/d`). The readout covariance is averaged in
/// closed form given the last hidden layer rather than sampled.
pub fn monte_carlo_kernel(x: &[f64], x2: &[f64], p: &NngpParams, width: usize, networks: usize, seed: u64) -> Vec<f64> {
    let d = x.len() as f64;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>() / d;
    let (sw, sb) = (p.sigma_w2, p.sigma_b2);
    let input = [sb + sw * dot(x, x), sb + sw * dot(x, x2), sb + sw * dot(x2, x2)];
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut acc = vec![0.0; p.depth];
    let inv_width = 1.0 / width as f64;
    for _ in 0..networks {
        let [mut k00, mut k01, mut k11] = input;
        for slot in acc.iter_mut() {
            let a = k00.sqrt();
            let b = k01 / a;
            let c = (k11 - b * b).max(0.0).sqrt();
            let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
            for _ in 0..width {
                let n1: f64 = rng.sample(StandardNormal);
                let n2: f64 = rng.sample(StandardNormal);
                let u = (a * n1).max(0.0);
                let v = (b * n1 + c * n2).max(0.0);
                s00 += u * u;
                s01 += u * v;
                s11 += v * v;
            }
            k00 = sb + sw * s00 * inv_width;
            k01 = sb + sw * s01 * inv_width;
            k11 = sb + sw * s11 * inv_width;
            *slot += k01;
        }
    }
    acc.iter().map(|s| s / networks as f64).collect()
}
