//! Infinite-width ReLU network kernel and exact GP regression on top of it.
//!
//! For inputs in `R^d` the layer-0 covariance is
//! `K⁰(x,x′) = σ_b² + σ_w² · x·x′ / d`, and each hidden ReLU layer maps
//! `(v, v′, c) = (Kˡ⁻¹(x,x), Kˡ⁻¹(x′,x′), Kˡ⁻¹(x,x′))` through the arc-cosine
//! expectation
//!
//! ```text
//! Kˡ(x,x′) = σ_b² + σ_w²/(2π) · √(v v′) · (sin θ + (π − θ) cos θ),
//! θ = arccos(clamp(c / √(v v′), −1, 1))
//! ```
//!
//! Scalar and matrix paths share [`relu_layer`] and accumulate dot products
//! in the same order, so they agree to the last bit.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::linalg::{ordered_dot, JitteredCholesky};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NngpParams {
    /// Number of hidden layers `L`.
    pub depth: usize,
    pub sigma_w2: f64,
    pub sigma_b2: f64,
    pub nonlinearity: Nonlinearity,
}

impl Default for NngpParams {
    fn default() -> Self {
        Self {
            depth: 3,
            sigma_w2: 1.6,
            sigma_b2: 0.1,
            nonlinearity: Nonlinearity::Relu,
        }
    }
}

impl NngpParams {
    pub fn new(depth: usize, sigma_w2: f64, sigma_b2: f64) -> Result<Self> {
        let p = Self {
            depth,
            sigma_w2,
            sigma_b2,
            nonlinearity: Nonlinearity::Relu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::invalid("NNGP depth must be >= 1"));
        }
        if !(self.sigma_w2 > 0.0) || !(self.sigma_b2 >= 0.0) {
            return Err(Error::invalid("NNGP needs sigma_w2 > 0 and sigma_b2 >= 0"));
        }
        Ok(())
    }
}

/// One ReLU layer of the recursion: maps `(c, v, v′)` to the next covariance.
#[inline]
pub fn relu_layer(p: &NngpParams, c: f64, v: f64, v2: f64) -> f64 {
    let norm = (v * v2).sqrt();
    let cos = if norm > 0.0 { (c / norm).clamp(-1.0, 1.0) } else { 1.0 };
    let theta = cos.acos();
    p.sigma_b2 + p.sigma_w2 / (2.0 * PI) * norm * (theta.sin() + (PI - theta) * cos)
}

#[inline]
fn input_layer(p: &NngpParams, dot: f64, d: usize) -> f64 {
    p.sigma_b2 + p.sigma_w2 * dot / d as f64
}

/// `K^L(x, x′)` by direct recursion.
pub fn kernel_entry(x: &[f64], x2: &[f64], p: &NngpParams) -> f64 {
    assert_eq!(x.len(), x2.len(), "kernel_entry: dimension mismatch");
    let d = x.len();
    let mut c = input_layer(p, ordered_dot(x, x2), d);
    let mut v = input_layer(p, ordered_dot(x, x), d);
    let mut v2 = input_layer(p, ordered_dot(x2, x2), d);
    for _ in 0..p.depth {
        let nc = relu_layer(p, c, v, v2);
        let nv = relu_layer(p, v, v, v);
        let nv2 = relu_layer(p, v2, v2, v2);
        (c, v, v2) = (nc, nv, nv2);
    }
    c
}

/// Self-covariances `K^L(x, x)` for every row.
pub fn kernel_diagonal(a: &DMatrix<f64>, p: &NngpParams) -> DVector<f64> {
    let at = a.transpose();
    let d = a.ncols();
    DVector::from_iterator(
        a.nrows(),
        at.column_iter().map(|col| {
            let s = col.as_slice();
            let mut v = input_layer(p, ordered_dot(s, s), d);
            for _ in 0..p.depth {
                v = relu_layer(p, v, v, v);
            }
            v
        }),
    )
}

/// Gram block `K^L(A, B)`; rows are computed in parallel, each entry independently.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &NngpParams) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    let d = a.ncols();
    let (n, m) = (a.nrows(), b.nrows());
    let at = a.transpose();
    let bt = b.transpose();
    let diag_input = |t: &DMatrix<f64>| -> Vec<f64> {
        t.column_iter()
            .map(|c| input_layer(p, ordered_dot(c.as_slice(), c.as_slice()), d))
            .collect()
    };
    let va0 = diag_input(&at);
    let vb0 = diag_input(&bt);

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = at.column(i);
            let xi = xi.as_slice();
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                let mut c = input_layer(p, ordered_dot(xi, bt.column(j).as_slice()), d);
                let (mut v, mut v2) = (va0[i], vb0[j]);
                for _ in 0..p.depth {
                    let nc = relu_layer(p, c, v, v2);
                    let nv = relu_layer(p, v, v, v);
                    let nv2 = relu_layer(p, v2, v2, v2);
                    (c, v, v2) = (nc, nv, nv2);
                }
                row.push(c);
            }
            row
        })
        .collect();
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Covariance function usable by [`GpModel`].
pub trait Kernel: Sync {
    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>>;
    fn diag(&self, a: &DMatrix<f64>) -> DVector<f64>;
}

impl Kernel for NngpParams {
    fn cross(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        kernel_matrix(a, b, self)
    }

    fn diag(&self, a: &DMatrix<f64>) -> DVector<f64> {
        kernel_diagonal(a, self)
    }
}

/// Exact GP posterior on (already standardized) training data.
#[derive(Debug, Clone)]
pub struct GpModel<K = NngpParams> {
    pub x: DMatrix<f64>,
    pub kernel: K,
    pub noise: f64,
    pub chol: JitteredCholesky,
    /// `(K + σ_n² I)⁻¹ y`
    pub alpha: DVector<f64>,
}

impl<K: Kernel> GpModel<K> {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, kernel: K, noise: f64) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::invalid("GP needs at least one training point"));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if !(noise >= 0.0) {
            return Err(Error::invalid(format!("noise variance {noise} must be >= 0")));
        }
        let k = kernel.cross(x, x)?;
        let chol = JitteredCholesky::factor(&k, &DVector::from_element(n, noise))?;
        let alpha = chol.solve_vec(y);
        Ok(Self {
            x: x.clone(),
            kernel,
            noise,
            chol,
            alpha,
        })
    }

    /// Posterior mean and latent variance (noise excluded, floored at 0).
    pub fn predict(&self, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if xs.ncols() != self.x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.x.ncols(),
                got: xs.ncols(),
            });
        }
        if xs.nrows() == 0 {
            return Ok((DVector::zeros(0), DVector::zeros(0)));
        }
        let ks = self.kernel.cross(&self.x, xs)?;
        let kss = self.kernel.diag(xs);
        Ok(posterior(&self.chol, &self.alpha, &ks, &kss))
    }
}

/// Mean `Ksᵀα` and variance `diag(Kss) − ‖L⁻¹Ks‖²` for cross-covariance `ks` (n×m).
pub(crate) fn posterior(
    chol: &JitteredCholesky,
    alpha: &DVector<f64>,
    ks: &DMatrix<f64>,
    kss: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let mean = ks.tr_mul(alpha);
    let v = chol.solve_lower(ks);
    let var = DVector::from_iterator(
        ks.ncols(),
        v.column_iter().zip(kss.iter()).map(|(c, &p)| (p - c.norm_squared()).max(0.0)),
    );
    (mean, var)
}

pub fn gp_fit(x: &DMatrix<f64>, y: &DVector<f64>, p: &NngpParams, noise: f64) -> Result<GpModel<NngpParams>> {
    GpModel::fit(x, y, *p, noise)
}

pub fn gp_predict<K: Kernel>(model: &GpModel<K>, xs: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    model.predict(xs)
}

/// `−½ yᵀα − Σ log Lᵢᵢ − (n/2) log 2π` for `K + diag(noise)`.
pub fn log_marginal_likelihood_from_kernel(k: &DMatrix<f64>, y: &DVector<f64>, noise: &DVector<f64>) -> Result<f64> {
    let chol = JitteredCholesky::factor(k, noise)?;
    Ok(lml_from_factor(&chol, y))
}

pub(crate) fn lml_from_factor(chol: &JitteredCholesky, y: &DVector<f64>) -> f64 {
    let alpha = chol.solve_vec(y);
    let n = y.len() as f64;
    -0.5 * y.dot(&alpha) - chol.lower.diagonal().iter().map(|v| v.ln()).sum::<f64>() - 0.5 * n * (2.0 * PI).ln()
}

pub fn log_marginal_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, p: &NngpParams, noise: f64) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::invalid("LML needs at least one point"));
    }
    let k = kernel_matrix(x, x, p)?;
    log_marginal_likelihood_from_kernel(&k, y, &DVector::from_element(x.nrows(), noise))
}

/// Seven log-spaced noise variances from 1e-4 to 1.
pub fn default_noise_grid() -> Vec<f64> {
    (0..7).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 6.0)).collect()
}

/// Index of the best score; ties resolved by `prefer(candidate, incumbent)`.
pub(crate) fn argmax_by(scores: &[f64], values: &[f64], prefer: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] || (scores[i] == scores[best] && prefer(values[i], values[best])) {
            best = i;
        }
    }
    best
}

/// Noise variance in `grid` with the highest evidence; ties toward larger noise.
pub fn select_noise(x: &DMatrix<f64>, y: &DVector<f64>, p: &NngpParams, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("noise grid is empty"));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let k = kernel_matrix(x, x, p)?;
    let n = x.nrows();
    let scores = grid
        .iter()
        .map(|&s| log_marginal_likelihood_from_kernel(&k, y, &DVector::from_element(n, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(grid[argmax_by(&scores, grid, |a, b| a > b)])
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseChoice {
    Fixed(f64),
    Grid(Vec<f64>),
}

/// NNGP regression in label units: standardizes inputs and labels with
/// statistics from the training set, fits an exact GP, and undoes the label
/// scaling on prediction.
#[derive(Debug, Clone)]
pub struct NngpRegressor {
    pub scaler: Scaler,
    pub gp: GpModel<NngpParams>,
}

impl NngpRegressor {
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, params: &NngpParams, noise: &NoiseChoice) -> Result<Self> {
        params.validate()?;
        let scaler = Scaler::fit(x, y)?;
        let xs = scaler.transform_x(x)?;
        let ys = scaler.transform_y(y);
        let noise = match noise {
            NoiseChoice::Fixed(v) => *v,
            NoiseChoice::Grid(g) => select_noise(&xs, &ys, params, g)?,
        };
        let gp = GpModel::fit(&xs, &ys, *params, noise)?;
        Ok(Self { scaler, gp })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (mean, var) = self.gp.predict(&self.scaler.transform_x(x)?)?;
        let s2 = self.scaler.y_std * self.scaler.y_std;
        Ok((self.scaler.inverse_y(&mean), var * s2))
    }

    pub fn n_bands(&self) -> usize {
        self.scaler.n_bands()
    }
}
