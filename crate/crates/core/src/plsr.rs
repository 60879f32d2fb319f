//! Single-response partial least squares regression via NIPALS deflation.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Scaler;
use crate::error::{Error, Result};

/// Norm of `Xᵀy` below which no further component can be extracted.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PlsrModel {
    /// Weights `W`, d×k, unit-norm columns.
    pub weights: DMatrix<f64>,
    /// X loadings `P`, d×k.
    pub loadings: DMatrix<f64>,
    /// y loadings `q`, length k.
    pub q: DVector<f64>,
    pub scaler: Scaler,
}

struct Nipals {
    weights: Vec<DVector<f64>>,
    loadings: Vec<DVector<f64>>,
    q: Vec<f64>,
    scores: Vec<DVector<f64>>,
}

/// Runs up to `k` deflation steps on standardized data; stops early when
/// `‖Xⱼᵀyⱼ‖` drops below [`RANK_TOLERANCE`].
fn nipals(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Nipals {
    let mut xj = x.clone();
    let mut yj = y.clone();
    let mut out = Nipals {
        weights: Vec::with_capacity(k),
        loadings: Vec::with_capacity(k),
        q: Vec::with_capacity(k),
        scores: Vec::with_capacity(k),
    };
    for _ in 0..k {
        let w = xj.tr_mul(&yj);
        let norm = w.norm();
        if norm < RANK_TOLERANCE {
            break;
        }
        let w = w / norm;
        let t = &xj * &w;
        let tt = t.dot(&t);
        let p = xj.tr_mul(&t) / tt;
        let q = yj.dot(&t) / tt;
        xj -= &t * p.transpose();
        yj -= &t * q;
        out.weights.push(w);
        out.loadings.push(p);
        out.q.push(q);
        out.scores.push(t);
    }
    out
}

fn columns(v: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    if v.is_empty() {
        return DMatrix::zeros(d, 0);
    }
    DMatrix::from_columns(v)
}

impl PlsrModel {
    /// Fits `k` components. Inputs are standardized internally.
    pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: y.len() });
        }
        if n < 2 || k < 1 || k > (n - 1).min(d) {
            return Err(Error::invalid(format!(
                "component count {k} outside [1, min(n-1, d)] for n={n}, d={d}"
            )));
        }
        let scaler = Scaler::fit(x, y)?;
        let xs = scaler.transform_x(x)?;
        let ys = scaler.transform_y(y);

        // constant labels: nothing to explain, predict the mean
        if ys.amax() < RANK_TOLERANCE {
            let basis = DMatrix::identity(d, k);
            return Ok(Self {
                weights: basis.clone(),
                loadings: basis,
                q: DVector::zeros(k),
                scaler,
            });
        }

        let fit = nipals(&xs, &ys, k);
        if fit.q.len() < k {
            return Err(Error::RankExhausted(fit.q.len() + 1));
        }
        Ok(Self {
            weights: columns(&fit.weights, d),
            loadings: columns(&fit.loadings, d),
            q: DVector::from_vec(fit.q),
            scaler,
        })
    }

    pub fn n_components(&self) -> usize {
        self.q.len()
    }

    pub fn n_bands(&self) -> usize {
        self.weights.nrows()
    }

    /// Regression vector `W(PᵀW)⁻¹q` in standardized units using the first `k` components.
    pub fn coefficients(&self, k: usize) -> Result<DVector<f64>> {
        let k = k.min(self.n_components());
        let w = self.weights.columns(0, k).into_owned();
        let p = self.loadings.columns(0, k).into_owned();
        let ptw = p.tr_mul(&w);
        let q = self.q.rows(0, k).into_owned();
        let z = crate::linalg::solve_square(&ptw, &q)
            .map_err(|_| Error::Singular("PᵀW is singular; model is corrupted".into()))?;
        Ok(w * z)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.predict_with(x, self.n_components())
    }

    /// Predicts with only the leading `k` components (NIPALS components are nested).
    pub fn predict_with(&self, x: &DMatrix<f64>, k: usize) -> Result<DVector<f64>> {
        if x.ncols() != self.n_bands() {
            return Err(Error::DimensionMismatch {
                expected: self.n_bands(),
                got: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Ok(DVector::zeros(0));
        }
        let beta = self.coefficients(k)?;
        let xs = self.scaler.transform_x(x)?;
        Ok(self.scaler.inverse_y(&(xs * beta)))
    }
}

/// Chooses the component count in `[1, k_max]` with the lowest mean `folds`-fold
/// CV RMSE. Ties go to the smaller count.
pub fn select_components(x: &DMatrix<f64>, y: &DVector<f64>, k_max: usize, folds: usize, seed: u64) -> Result<usize> {
    let n = x.nrows();
    if folds < 2 || n < folds {
        return Err(Error::invalid(format!("need 2 <= folds <= n (folds={folds}, n={n})")));
    }
    if k_max <= 1 {
        return Ok(1);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut sse = vec![0.0; k_max];
    let mut valid = vec![true; k_max];
    for f in 0..folds {
        let held: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
        let mut fit_idx: Vec<usize> = order
            .iter()
            .copied()
            .enumerate()
            .filter(|(pos, _)| pos % folds != f)
            .map(|(_, i)| i)
            .collect();
        fit_idx.sort_unstable();
        let xf = x.select_rows(&fit_idx);
        let yf = DVector::from_iterator(fit_idx.len(), fit_idx.iter().map(|&i| y[i]));
        let xh = x.select_rows(&held);

        let k_fold = k_max.min(fit_idx.len().saturating_sub(1)).min(x.ncols());
        let model = if k_fold >= 1 {
            // partial fits are fine here: counts beyond the exhausted rank are marked invalid
            let scaler = Scaler::fit(&xf, &yf)?;
            let ys = scaler.transform_y(&yf);
            let fit = nipals(&scaler.transform_x(&xf)?, &ys, k_fold);
            if fit.q.is_empty() {
                None
            } else {
                let d = x.ncols();
                Some(PlsrModel {
                    weights: columns(&fit.weights, d),
                    loadings: columns(&fit.loadings, d),
                    q: DVector::from_vec(fit.q),
                    scaler,
                })
            }
        } else {
            None
        };

        for k in 1..=k_max {
            match &model {
                Some(m) if k <= m.n_components() => {
                    let pred = m.predict_with(&xh, k)?;
                    sse[k - 1] += held
                        .iter()
                        .zip(pred.iter())
                        .map(|(&i, p)| (y[i] - p) * (y[i] - p))
                        .sum::<f64>();
                }
                _ => valid[k - 1] = false,
            }
        }
    }

    let mut best = 1;
    let mut best_sse = f64::INFINITY;
    for k in 1..=k_max {
        if valid[k - 1] && sse[k - 1] < best_sse {
            best = k;
            best_sse = sse[k - 1];
        }
    }
    Ok(best)
}

/// Mean CV RMSE for each `k` in `1..=k_max`, computed by refitting every count.
pub fn cv_rmse_curve(x: &DMatrix<f64>, y: &DVector<f64>, k_max: usize, folds: usize, seed: u64) -> Result<Vec<f64>> {
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut total = 0.0;
        for f in 0..folds {
            let held: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
            let mut fit_idx: Vec<usize> = order
                .iter()
                .copied()
                .enumerate()
                .filter(|(pos, _)| pos % folds != f)
                .map(|(_, i)| i)
                .collect();
            fit_idx.sort_unstable();
            let m = PlsrModel::fit(
                &x.select_rows(&fit_idx),
                &DVector::from_iterator(fit_idx.len(), fit_idx.iter().map(|&i| y[i])),
                k,
            )?;
            let pred = m.predict(&x.select_rows(&held))?;
            total += held.iter().zip(pred.iter()).map(|(&i, p)| (y[i] - p) * (y[i] - p)).sum::<f64>();
        }
        out.push((total / n as f64).sqrt());
    }
    Ok(out)
}
