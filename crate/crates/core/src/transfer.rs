//! Adaptive transfer GP over a source and a target task.
//!
//! Training rows are always stacked `[source; target]`. The joint prior is
//!
//! ```text
//! K(λ) = [ K_ss    λ K_st ]
//!        [ λ K_ts  K_tt   ]
//! ```
//!
//! with NNGP base blocks. Because
//! `K(λ) = λ·K_pooled + (1 − λ)·blockdiag(K_ss, K_tt)`, every `λ ∈ [0, 1]`
//! gives a valid covariance. `λ = 0` decouples the tasks and `λ = 1` pools
//! them. Test points belong to the target task, so their covariance with
//! source rows carries the factor `λ`.
//!
//! `λ` and the per-task noise variances are chosen by maximizing the stacked
//! log marginal likelihood over a grid. For large problems the kernel can be
//! replaced by a Nyström approximation `C W⁺ Cᵀ` on uniformly sampled
//! landmarks; fitting, evidence and prediction then only factor `r × r`
//! systems (`r ≤ m` landmarks) through the Woodbury identity.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{LabeledDataset, Scaler};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, JitteredCholesky, JITTER_START};
use crate::nngp::{argmax_by, default_noise_grid, kernel_diagonal, kernel_matrix, lml_from_factor, posterior, NngpParams};

/// Eigenvalues of the landmark block at or below this are dropped from `W⁺`.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// `{0, 0.1, ..., 1.0}`
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskNoise {
    pub source: f64,
    pub target: f64,
}

impl TaskNoise {
    pub fn equal(v: f64) -> Self {
        Self { source: v, target: v }
    }
}

/// Standardized training data for both tasks.
#[derive(Debug, Clone)]
pub struct TransferData {
    pub xs: DMatrix<f64>,
    pub ys: DVector<f64>,
    pub xt: DMatrix<f64>,
    pub yt: DVector<f64>,
}

impl TransferData {
    pub fn new(xs: DMatrix<f64>, ys: DVector<f64>, xt: DMatrix<f64>, yt: DVector<f64>) -> Result<Self> {
        if xs.nrows() == 0 || xt.nrows() == 0 {
            return Err(Error::invalid("transfer GP needs nonempty source and target sets"));
        }
        if xs.ncols() != xt.ncols() {
            return Err(Error::DimensionMismatch {
                expected: xt.ncols(),
                got: xs.ncols(),
            });
        }
        if ys.len() != xs.nrows() || yt.len() != xt.nrows() {
            return Err(Error::invalid("label count does not match row count"));
        }
        Ok(Self { xs, ys, xt, yt })
    }

    pub fn n_source(&self) -> usize {
        self.xs.nrows()
    }
    pub fn n_target(&self) -> usize {
        self.xt.nrows()
    }
    pub fn n(&self) -> usize {
        self.n_source() + self.n_target()
    }
    pub fn n_bands(&self) -> usize {
        self.xt.ncols()
    }

    pub fn stacked_x(&self) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(self.n(), self.n_bands());
        x.rows_mut(0, self.n_source()).copy_from(&self.xs);
        x.rows_mut(self.n_source(), self.n_target()).copy_from(&self.xt);
        x
    }

    pub fn stacked_y(&self) -> DVector<f64> {
        let mut y = DVector::zeros(self.n());
        y.rows_mut(0, self.n_source()).copy_from(&self.ys);
        y.rows_mut(self.n_source(), self.n_target()).copy_from(&self.yt);
        y
    }

    fn noise_diag(&self, noise: TaskNoise) -> DVector<f64> {
        let ns = self.n_source();
        DVector::from_fn(self.n(), |i, _| if i < ns { noise.source } else { noise.target })
    }

    fn is_source(&self, row: usize) -> bool {
        row < self.n_source()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

/// `[[Kss, λ Kst], [λ Kstᵀ, Ktt]]`
pub fn assemble_transfer_kernel(kss: &DMatrix<f64>, kst: &DMatrix<f64>, ktt: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let (ns, nt) = (kss.nrows(), ktt.nrows());
    if kss.ncols() != ns || ktt.ncols() != nt {
        return Err(Error::invalid("Kss and Ktt must be square"));
    }
    if kst.shape() != (ns, nt) {
        return Err(Error::invalid(format!(
            "Kst has shape {:?}, expected ({ns}, {nt})",
            kst.shape()
        )));
    }
    let mut k = DMatrix::zeros(ns + nt, ns + nt);
    k.view_mut((0, 0), (ns, ns)).copy_from(kss);
    k.view_mut((ns, ns), (nt, nt)).copy_from(ktt);
    let cross = kst * lambda;
    k.view_mut((0, ns), (ns, nt)).copy_from(&cross);
    k.view_mut((ns, 0), (nt, ns)).copy_from(&cross.transpose());
    Ok(k)
}

/// Base NNGP blocks over the stacked training set, computed once per fit.
#[derive(Debug, Clone)]
pub struct BaseBlocks {
    pub kss: DMatrix<f64>,
    pub kst: DMatrix<f64>,
    pub ktt: DMatrix<f64>,
}

impl BaseBlocks {
    pub fn compute(data: &TransferData, params: &NngpParams) -> Result<Self> {
        Ok(Self {
            kss: kernel_matrix(&data.xs, &data.xs, params)?,
            kst: kernel_matrix(&data.xs, &data.xt, params)?,
            ktt: kernel_matrix(&data.xt, &data.xt, params)?,
        })
    }

    pub fn assemble(&self, lambda: f64) -> Result<DMatrix<f64>> {
        assemble_transfer_kernel(&self.kss, &self.kst, &self.ktt, lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelApprox {
    Exact,
    Nystrom { landmarks: usize, seed: u64 },
}

/// Uniformly sampled landmark rows of the stacked set, sorted.
pub fn sample_landmarks(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m < 1 || m > n {
        return Err(Error::invalid(format!("landmark count {m} outside [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Transfer-kernel columns for the given stacked rows: `K(λ)[:, landmarks]`.
fn landmark_columns(data: &TransferData, params: &NngpParams, landmarks: &[usize], lambda: f64) -> Result<DMatrix<f64>> {
    let stacked = data.stacked_x();
    let xl = stacked.select_rows(landmarks);
    let mut c = kernel_matrix(&stacked, &xl, params)?;
    for (j, &l) in landmarks.iter().enumerate() {
        let l_src = data.is_source(l);
        for i in 0..c.nrows() {
            if data.is_source(i) != l_src {
                c[(i, j)] *= lambda;
            }
        }
    }
    Ok(c)
}

/// Low-rank features `U = C V Λ^{-1/2}` with `U Uᵀ = C W⁺ Cᵀ`, plus the
/// projection `Λ^{-1/2} Vᵀ` that maps landmark covariances to features.
fn nystrom_features_from_columns(c: &DMatrix<f64>, landmarks: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let w = c.select_rows(landmarks);
    let w = (&w + w.transpose()) * 0.5;
    let eig = symmetric_eigen(&w);
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > EIGEN_FLOOR).collect();
    let m = landmarks.len();
    let projection = DMatrix::from_fn(keep.len(), m, |r, j| {
        let i = keep[r];
        eig.eigenvectors[(j, i)] / eig.eigenvalues[i].sqrt()
    });
    let u = c * projection.transpose();
    (u, projection)
}

/// `U` (n×r) such that `U Uᵀ` is the Nyström approximation of `K(λ)` on `landmarks`.
pub fn nystrom_features(data: &TransferData, params: &NngpParams, lambda: f64, landmarks: &[usize]) -> Result<DMatrix<f64>> {
    check_lambda(lambda)?;
    let c = landmark_columns(data, params, landmarks, lambda)?;
    Ok(nystrom_features_from_columns(&c, landmarks).0)
}

/// Woodbury pieces for `(U Uᵀ + D)`, all `r × r` or smaller.
struct WoodburySystem {
    /// Cholesky of `I + Uᵀ D⁻¹ U`.
    inner: JitteredCholesky,
    /// `Uᵀ D⁻¹ y`
    b: DVector<f64>,
    log_det_d: f64,
    quad_d: f64,
    a: DMatrix<f64>,
}

fn woodbury(u: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>) -> Result<WoodburySystem> {
    let r = u.ncols();
    let dinv = d.map(|v| 1.0 / v);
    let mut ud = u.clone();
    for (i, mut row) in ud.row_iter_mut().enumerate() {
        row *= dinv[i];
    }
    let a = u.tr_mul(&ud);
    let b = ud.tr_mul(y);
    let inner = JitteredCholesky::factor(&(DMatrix::identity(r, r) + &a), &DVector::zeros(r))?;
    Ok(WoodburySystem {
        inner,
        b,
        log_det_d: d.iter().map(|v| v.ln()).sum(),
        quad_d: y.iter().zip(dinv.iter()).map(|(y, di)| y * y * di).sum(),
        a,
    })
}

impl WoodburySystem {
    fn lml(&self, n: usize) -> f64 {
        let z = self.inner.solve_vec(&self.b);
        let quad = self.quad_d - self.b.dot(&z);
        let log_det = self.inner.log_det() + self.log_det_d;
        -0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln()
    }
}

fn nystrom_lml(data: &TransferData, params: &NngpParams, lambda: f64, noise: TaskNoise, landmarks: &[usize]) -> Result<f64> {
    let u = nystrom_features(data, params, lambda, landmarks)?;
    let d = data.noise_diag(noise).add_scalar(JITTER_START);
    Ok(woodbury(&u, &d, &data.stacked_y())?.lml(data.n()))
}

/// Selected relatedness with the evidence curve it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub noise: TaskNoise,
    /// Evaluated λ values, ascending.
    pub grid: Vec<f64>,
    /// Profile log marginal likelihood (maximized over noise) per grid value.
    pub lml: Vec<f64>,
}

impl LambdaEstimate {
    /// `lambda,lml` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,lml\n");
        for (l, v) in self.grid.iter().zip(&self.lml) {
            s.push_str(&format!("{l},{v}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSearch {
    Fixed(TaskNoise),
    /// Joint grid over (source noise, target noise), searched with λ.
    Grid { source: Vec<f64>, target: Vec<f64> },
}

impl NoiseSearch {
    pub fn default_grid() -> Self {
        NoiseSearch::Grid {
            source: default_noise_grid(),
            target: default_noise_grid(),
        }
    }

    fn candidates(&self) -> Result<Vec<TaskNoise>> {
        match self {
            NoiseSearch::Fixed(n) => Ok(vec![*n]),
            NoiseSearch::Grid { source, target } => {
                if source.is_empty() || target.is_empty() {
                    return Err(Error::invalid("noise grid is empty"));
                }
                Ok(source
                    .iter()
                    .flat_map(|&s| target.iter().map(move |&t| TaskNoise { source: s, target: t }))
                    .collect())
            }
        }
    }
}

struct Evidence<'a> {
    data: &'a TransferData,
    params: &'a NngpParams,
    approx: KernelApprox,
    blocks: Option<BaseBlocks>,
    landmarks: Vec<usize>,
}

impl<'a> Evidence<'a> {
    fn new(data: &'a TransferData, params: &'a NngpParams, approx: KernelApprox) -> Result<Self> {
        let (blocks, landmarks) = match approx {
            KernelApprox::Exact => (Some(BaseBlocks::compute(data, params)?), Vec::new()),
            KernelApprox::Nystrom { landmarks, seed } => (None, sample_landmarks(data.n(), landmarks, seed)?),
        };
        Ok(Self {
            data,
            params,
            approx,
            blocks,
            landmarks,
        })
    }

    /// Best LML over `noises` at this λ, with the noise that attains it.
    /// Noise ties go to the earlier candidate.
    fn profile(&self, lambda: f64, noises: &[TaskNoise]) -> Result<(f64, TaskNoise)> {
        let mut best = (f64::NEG_INFINITY, noises[0]);
        match self.approx {
            KernelApprox::Exact => {
                let k = self.blocks.as_ref().expect("exact evidence has blocks").assemble(lambda)?;
                let y = self.data.stacked_y();
                for &noise in noises {
                    let chol = JitteredCholesky::factor(&k, &self.data.noise_diag(noise))?;
                    let v = lml_from_factor(&chol, &y);
                    if v > best.0 {
                        best = (v, noise);
                    }
                }
            }
            KernelApprox::Nystrom { .. } => {
                for &noise in noises {
                    let v = nystrom_lml(self.data, self.params, lambda, noise, &self.landmarks)?;
                    if v > best.0 {
                        best = (v, noise);
                    }
                }
            }
        }
        if !best.0.is_finite() {
            return Err(Error::invalid(format!("non-finite evidence at lambda {lambda}")));
        }
        Ok(best)
    }
}

/// Golden-section iterations used when refining the winning grid cell.
pub const REFINE_ITERATIONS: usize = 20;

/// Picks λ (and per-task noise) by maximizing the stacked log marginal
/// likelihood over `lambda_grid`. Ties go to the smaller λ. With `refine`,
/// a golden-section search on the cell around the grid winner adds points to
/// the curve.
pub fn estimate_lambda(
    data: &TransferData,
    params: &NngpParams,
    noise: &NoiseSearch,
    lambda_grid: &[f64],
    approx: KernelApprox,
    refine: bool,
) -> Result<LambdaEstimate> {
    if lambda_grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    for &l in lambda_grid {
        check_lambda(l)?;
    }
    let noises = noise.candidates()?;
    let ev = Evidence::new(data, params, approx)?;

    let mut grid: Vec<f64> = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let evals = grid
        .par_iter()
        .map(|&l| ev.profile(l, &noises))
        .collect::<Result<Vec<_>>>()?;
    let mut lml: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let mut noise_at: Vec<TaskNoise> = evals.iter().map(|e| e.1).collect();

    if refine && grid.len() > 1 {
        let best = argmax_by(&lml, &grid, |a, b| a < b);
        let lo = if best > 0 { grid[best - 1] } else { grid[0] };
        let hi = if best + 1 < grid.len() { grid[best + 1] } else { grid[best] };
        let fixed = [noise_at[best]];
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (lo, hi);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = ev.profile(c, &fixed)?.0;
        let mut fd = ev.profile(d, &fixed)?.0;
        let mut extra = vec![(c, fc), (d, fd)];
        for _ in 0..REFINE_ITERATIONS {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = ev.profile(c, &fixed)?.0;
                extra.push((c, fc));
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = ev.profile(d, &fixed)?.0;
                extra.push((d, fd));
            }
        }
        for (l, v) in extra {
            if !grid.contains(&l) {
                let pos = grid.partition_point(|&g| g < l);
                grid.insert(pos, l);
                lml.insert(pos, v);
                noise_at.insert(pos, fixed[0]);
            }
        }
    }

    let best = argmax_by(&lml, &grid, |a, b| a < b);
    Ok(LambdaEstimate {
        lambda: grid[best],
        noise: noise_at[best],
        grid,
        lml,
    })
}

#[derive(Debug, Clone)]
pub struct NystromFactors {
    /// Stacked row indices used as landmarks.
    pub landmarks: Vec<usize>,
    /// `Λ^{-1/2} Vᵀ` (r×m): landmark covariances to features.
    pub projection: DMatrix<f64>,
    /// `(I + A)⁻¹ Uᵀ D⁻¹ y`
    pub weights: DVector<f64>,
    /// `A (I + A)⁻¹` with `A = Uᵀ D⁻¹ U`.
    pub shrink: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub enum Factorization {
    Exact { chol: JitteredCholesky, alpha: DVector<f64> },
    Nystrom(NystromFactors),
}

#[derive(Debug, Clone)]
pub struct TransferGpModel {
    pub data: TransferData,
    pub lambda: f64,
    pub params: NngpParams,
    pub noise: TaskNoise,
    pub approx: KernelApprox,
    pub factor: Factorization,
}

impl TransferGpModel {
    /// Exact fit: Cholesky of the full transfer kernel plus per-task noise.
    pub fn fit(data: TransferData, lambda: f64, params: NngpParams, noise: TaskNoise) -> Result<Self> {
        check_lambda(lambda)?;
        let k = BaseBlocks::compute(&data, &params)?.assemble(lambda)?;
        let chol = JitteredCholesky::factor(&k, &data.noise_diag(noise))?;
        let alpha = chol.solve_vec(&data.stacked_y());
        Ok(Self {
            data,
            lambda,
            params,
            noise,
            approx: KernelApprox::Exact,
            factor: Factorization::Exact { chol, alpha },
        })
    }

    /// Low-rank fit on `m` uniformly sampled landmarks; never forms an `n × n` matrix.
    pub fn fit_nystrom(data: TransferData, lambda: f64, params: NngpParams, noise: TaskNoise, m: usize, seed: u64) -> Result<Self> {
        check_lambda(lambda)?;
        let landmarks = sample_landmarks(data.n(), m, seed)?;
        let c = landmark_columns(&data, &params, &landmarks, lambda)?;
        let (u, projection) = nystrom_features_from_columns(&c, &landmarks);
        let d = data.noise_diag(noise).add_scalar(JITTER_START);
        let sys = woodbury(&u, &d, &data.stacked_y())?;
        let r = u.ncols();
        let weights = sys.inner.solve_vec(&sys.b);
        // A (I + A)⁻¹ = I − (I + A)⁻¹
        let mut inv = DMatrix::zeros(r, r);
        for j in 0..r {
            let mut e = DVector::zeros(r);
            e[j] = 1.0;
            inv.set_column(j, &sys.inner.solve_vec(&e));
        }
        let mut shrink = DMatrix::identity(r, r) - inv;
        shrink = (&shrink + shrink.transpose()) * 0.5;
        debug_assert_eq!(sys.a.nrows(), r);
        Ok(Self {
            data,
            lambda,
            params,
            noise,
            approx: KernelApprox::Nystrom { landmarks: m, seed },
            factor: Factorization::Nystrom(NystromFactors {
                landmarks,
                projection,
                weights,
                shrink,
            }),
        })
    }

    pub fn n_bands(&self) -> usize {
        self.data.n_bands()
    }

    /// Covariance of every training row with target-task test points: `[λ K(Xs, X*); K(Xt, X*)]`.
    fn cross_covariance(&self, rows: &[usize], xstar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let stacked = self.data.stacked_x();
        let xr = stacked.select_rows(rows);
        let mut k = kernel_matrix(&xr, xstar, &self.params)?;
        for (i, &r) in rows.iter().enumerate() {
            if self.data.is_source(r) {
                k.row_mut(i).scale_mut(self.lambda);
            }
        }
        Ok(k)
    }

    /// Posterior mean and latent variance at target-task points (standardized units).
    pub fn predict(&self, xstar: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if xstar.ncols() != self.n_bands() {
            return Err(Error::DimensionMismatch {
                expected: self.n_bands(),
                got: xstar.ncols(),
            });
        }
        if xstar.nrows() == 0 {
            return Ok((DVector::zeros(0), DVector::zeros(0)));
        }
        let kss = kernel_diagonal(xstar, &self.params);
        match &self.factor {
            Factorization::Exact { chol, alpha } => {
                let all: Vec<usize> = (0..self.data.n()).collect();
                let ks = self.cross_covariance(&all, xstar)?;
                Ok(posterior(chol, alpha, &ks, &kss))
            }
            Factorization::Nystrom(f) => {
                let kl = self.cross_covariance(&f.landmarks, xstar)?;
                let us = &f.projection * kl;
                let mean = us.tr_mul(&f.weights);
                let su = &f.shrink * &us;
                let var = DVector::from_iterator(
                    us.ncols(),
                    (0..us.ncols()).map(|j| (kss[j] - us.column(j).dot(&su.column(j))).max(0.0)),
                );
                Ok((mean, var))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    Auto { grid: Vec<f64>, refine: bool },
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Auto {
            grid: default_lambda_grid(),
            refine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOptions {
    pub params: NngpParams,
    pub lambda: LambdaChoice,
    pub noise: NoiseSearch,
    pub approx: KernelApprox,
}

impl Default for TransferOptions {
    fn default() -> Self {
        Self {
            params: NngpParams::default(),
            lambda: LambdaChoice::default(),
            noise: NoiseSearch::default_grid(),
            approx: KernelApprox::Exact,
        }
    }
}

/// Transfer GP in label units. Inputs and labels of both tasks are
/// standardized with statistics of the target training set.
#[derive(Debug, Clone)]
pub struct TransferGpRegressor {
    pub scaler: Scaler,
    pub model: TransferGpModel,
    pub estimate: LambdaEstimate,
}

impl TransferGpRegressor {
    pub fn fit(source: &LabeledDataset, target: &LabeledDataset, opts: &TransferOptions) -> Result<Self> {
        if source.grid() != target.grid() {
            return Err(Error::invalid("source and target use different wavelength grids"));
        }
        opts.params.validate()?;
        let scaler = Scaler::fit(target.x(), target.y())?;
        let data = TransferData::new(
            scaler.transform_x(source.x())?,
            scaler.transform_y(source.y()),
            scaler.transform_x(target.x())?,
            scaler.transform_y(target.y()),
        )?;
        let estimate = match &opts.lambda {
            LambdaChoice::Fixed(l) => estimate_lambda(&data, &opts.params, &opts.noise, &[*l], opts.approx, false)?,
            LambdaChoice::Auto { grid, refine } => estimate_lambda(&data, &opts.params, &opts.noise, grid, opts.approx, *refine)?,
        };
        let model = match opts.approx {
            KernelApprox::Exact => TransferGpModel::fit(data, estimate.lambda, opts.params, estimate.noise)?,
            KernelApprox::Nystrom { landmarks, seed } => {
                TransferGpModel::fit_nystrom(data, estimate.lambda, opts.params, estimate.noise, landmarks, seed)?
            }
        };
        Ok(Self { scaler, model, estimate })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let (mean, var) = self.model.predict(&self.scaler.transform_x(x)?)?;
        let s2 = self.scaler.y_std * self.scaler.y_std;
        Ok((self.scaler.inverse_y(&mean), var * s2))
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eigenvalue, probe};
    use crate::nngp::GpModel;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn toy(ns: usize, nt: usize, d: usize, seed: u64) -> TransferData {
        let xs = randn(ns, d, seed);
        let xt = randn(nt, d, seed + 1);
        let f = |x: &DMatrix<f64>| DVector::from_fn(x.nrows(), |i, _| x[(i, 0)] - 0.5 * x[(i, 1)]);
        TransferData::new(xs.clone(), f(&xs), xt.clone(), f(&xt)).unwrap()
    }

    #[test]
    fn scalar_assembly() {
        let e = |v: f64| DMatrix::from_element(1, 1, v);
        let k = assemble_transfer_kernel(&e(2.0), &e(1.0), &e(2.0), 0.5).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0]));
        assert!(assemble_transfer_kernel(&e(2.0), &e(1.0), &e(2.0), 1.5).is_err());
        assert!(assemble_transfer_kernel(&e(2.0), &DMatrix::zeros(1, 2), &e(2.0), 0.5).is_err());
    }

    #[test]
    fn lambda_extremes() {
        let data = toy(5, 4, 3, 1);
        let p = NngpParams::default();
        let blocks = BaseBlocks::compute(&data, &p).unwrap();
        let k0 = blocks.assemble(0.0).unwrap();
        assert!(k0.view((0, 5), (5, 4)).iter().all(|&v| v == 0.0));
        assert_eq!(k0.view((0, 0), (5, 5)), blocks.kss.view((0, 0), (5, 5)));
        let stacked = data.stacked_x();
        let pooled = kernel_matrix(&stacked, &stacked, &p).unwrap();
        assert_eq!(blocks.assemble(1.0).unwrap(), pooled);
    }

    #[test]
    fn convex_combination_and_psd() {
        let data = toy(30, 30, 4, 2);
        let p = NngpParams::default();
        let blocks = BaseBlocks::compute(&data, &p).unwrap();
        let pooled = blocks.assemble(1.0).unwrap();
        let block_diag = blocks.assemble(0.0).unwrap();
        for l in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let k = blocks.assemble(l).unwrap();
            let combo = &pooled * l + &block_diag * (1.0 - l);
            assert!((k - &combo).amax() <= 1e-12);
            assert!(min_eigenvalue(&blocks.assemble(l).unwrap()) >= -1e-8);
        }
    }

    #[test]
    fn decoupled_at_zero() {
        let data = toy(12, 8, 3, 3);
        let p = NngpParams::default();
        let m = TransferGpModel::fit(data.clone(), 0.0, p, TaskNoise { source: 0.05, target: 0.1 }).unwrap();
        let gp = GpModel::fit(&data.xt, &data.yt, p, 0.1).unwrap();
        let xs = randn(10, 3, 4);
        let (a, va) = m.predict(&xs).unwrap();
        let (b, vb) = gp.predict(&xs).unwrap();
        assert!((a - b).amax() <= 1e-8);
        assert!((va - vb).amax() <= 1e-8);
    }

    #[test]
    fn pooled_at_one() {
        let data = toy(12, 8, 3, 5);
        let p = NngpParams::default();
        let m = TransferGpModel::fit(data.clone(), 1.0, p, TaskNoise::equal(0.1)).unwrap();
        let gp = GpModel::fit(&data.stacked_x(), &data.stacked_y(), p, 0.1).unwrap();
        let xs = randn(10, 3, 6);
        let (a, va) = m.predict(&xs).unwrap();
        let (b, vb) = gp.predict(&xs).unwrap();
        assert!((a - b).amax() <= 1e-8);
        assert!((va - vb).amax() <= 1e-8);
    }

    #[test]
    fn empty_source_rejected() {
        assert!(TransferData::new(DMatrix::zeros(0, 3), DVector::zeros(0), randn(4, 3, 0), DVector::zeros(4)).is_err());
    }

    #[test]
    fn single_lambda_candidate() {
        let data = toy(10, 10, 3, 7);
        let est = estimate_lambda(&data, &NngpParams::default(), &NoiseSearch::Fixed(TaskNoise::equal(0.1)), &[0.7], KernelApprox::Exact, false).unwrap();
        assert_eq!(est.lambda, 0.7);
        assert_eq!(est.grid, vec![0.7]);
        assert!(est.lml[0].is_finite());
    }

    #[test]
    fn curve_argmax_contract() {
        let data = toy(15, 10, 3, 8);
        let est = estimate_lambda(&data, &NngpParams::default(), &NoiseSearch::default_grid(), &default_lambda_grid(), KernelApprox::Exact, true).unwrap();
        assert!(est.lml.iter().all(|v| v.is_finite()));
        let max = est.lml.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = est.lml.iter().position(|&v| v == max).unwrap();
        assert_eq!(est.lambda, est.grid[first]);
        assert!(est.grid.windows(2).all(|w| w[0] < w[1]));
        assert!(est.grid.len() > 11);
        assert!(est.to_csv().starts_with("lambda,lml\n"));
    }

    #[test]
    fn nystrom_full_landmarks_is_exact() {
        let data = toy(20, 15, 3, 9);
        let p = NngpParams::default();
        let noise = TaskNoise { source: 0.05, target: 0.1 };
        let exact = TransferGpModel::fit(data.clone(), 0.6, p, noise).unwrap();
        let low = TransferGpModel::fit_nystrom(data.clone(), 0.6, p, noise, data.n(), 1).unwrap();
        let xs = randn(12, 3, 10);
        let (a, va) = exact.predict(&xs).unwrap();
        let (b, vb) = low.predict(&xs).unwrap();
        assert!((a - b).amax() <= 1e-6);
        assert!((va - vb).amax() <= 1e-6);
    }

    #[test]
    fn nystrom_rank_one_is_finite_and_small() {
        let data = toy(40, 30, 3, 11);
        let p = NngpParams::default();
        probe::reset();
        let m = TransferGpModel::fit_nystrom(data, 0.5, p, TaskNoise::equal(0.1), 1, 2).unwrap();
        let (mean, var) = m.predict(&randn(5, 3, 12)).unwrap();
        assert!(mean.iter().chain(var.iter()).all(|v| v.is_finite()));
        assert!(probe::max_factor_dim() <= 1);
    }

    #[test]
    fn landmark_sampling() {
        assert_eq!(sample_landmarks(5, 5, 3).unwrap(), vec![0, 1, 2, 3, 4]);
        let a = sample_landmarks(100, 10, 3).unwrap();
        assert_eq!(a, sample_landmarks(100, 10, 3).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_landmarks(5, 0, 3).is_err());
        assert!(sample_landmarks(5, 6, 3).is_err());
    }

    #[test]
    fn nystrom_evidence_matches_exact_at_full_rank() {
        let data = toy(10, 10, 3, 13);
        let p = NngpParams::default();
        let noise = NoiseSearch::Fixed(TaskNoise { source: 0.1, target: 0.2 });
        let grid = [0.0, 0.5, 1.0];
        let exact = estimate_lambda(&data, &p, &noise, &grid, KernelApprox::Exact, false).unwrap();
        let low = estimate_lambda(&data, &p, &noise, &grid, KernelApprox::Nystrom { landmarks: 20, seed: 0 }, false).unwrap();
        for (a, b) in exact.lml.iter().zip(&low.lml) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}
