//! Dense factorization helpers shared by the GP modules.
//!
//! Every square factorization goes through this module so that
//! [`probe`] can report the largest system the crate ever factored on the
//! current thread. The low-rank transfer path is tested against that probe.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

pub mod probe {
    use std::cell::Cell;

    thread_local! {
        static MAX_FACTOR_DIM: Cell<usize> = const { Cell::new(0) };
        static FACTOR_COUNT: Cell<usize> = const { Cell::new(0) };
    }

    pub fn reset() {
        MAX_FACTOR_DIM.with(|c| c.set(0));
        FACTOR_COUNT.with(|c| c.set(0));
    }

    /// Largest square dimension factored or decomposed since the last [`reset`].
    pub fn max_factor_dim() -> usize {
        MAX_FACTOR_DIM.with(Cell::get)
    }

    pub fn factor_count() -> usize {
        FACTOR_COUNT.with(Cell::get)
    }

    pub(crate) fn record(dim: usize) {
        MAX_FACTOR_DIM.with(|c| c.set(c.get().max(dim)));
        FACTOR_COUNT.with(|c| c.set(c.get() + 1));
    }
}

/// Lower Cholesky factor of `k + diag(noise) + jitter·I` with jitter escalation.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
}

impl JitteredCholesky {
    /// Factor `k + diag(noise) + jitter·I`, starting from `JITTER_START` and
    /// multiplying by 10 until success or `JITTER_MAX` is exceeded.
    pub fn factor(k: &DMatrix<f64>, noise: &DVector<f64>) -> Result<Self> {
        let n = k.nrows();
        if k.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: k.ncols(),
            });
        }
        if noise.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: noise.len(),
            });
        }
        probe::record(n);
        let mut jitter = JITTER_START;
        loop {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += noise[i] + jitter;
            }
            if let Some(chol) = nalgebra::Cholesky::new(a) {
                let lower = chol.unpack();
                if lower.diagonal().iter().all(|&v| v > 0.0 && v.is_finite()) {
                    return Ok(Self { lower, jitter });
                }
            }
            // 1e-10 * 10^6 lands on 1e-4 up to rounding; compare with slack
            if jitter >= JITTER_MAX * (1.0 - 1e-9) {
                return Err(Error::NotPsd { jitter: JITTER_MAX });
            }
            jitter *= 10.0;
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lower
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let z = self.solve_lower_vec(b);
        self.lower
            .tr_solve_lower_triangular(&z)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

/// Eigen-decomposition of a symmetric matrix, recorded by the probe.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> nalgebra::SymmetricEigen<f64, nalgebra::Dyn> {
    probe::record(a.nrows());
    nalgebra::SymmetricEigen::new(a.clone())
}

/// Smallest eigenvalue of `(a + aᵀ)/2`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    symmetric_eigen(&sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn solve_square(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    probe::record(a.nrows());
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{}x{} system", a.nrows(), a.ncols())))
}

/// Dot product of two columns, always accumulated left to right.
///
/// Used where results must not depend on matrix shape or blocking.
#[inline]
pub(crate) fn ordered_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
