//! RMSE and R² on held-out predictions.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub r2: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn compute(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<Self> {
        Ok(Self {
            rmse: rmse(y, y_hat)?,
            r2: r2(y, y_hat)?,
            n: y.len(),
        })
    }
}

fn check_lengths(y: &DVector<f64>, y_hat: &DVector<f64>, min: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: y_hat.len(),
        });
    }
    if y.len() < min {
        return Err(Error::invalid(format!("need at least {min} values, got {}", y.len())));
    }
    Ok(())
}

pub fn rmse(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    check_lengths(y, y_hat, 1)?;
    let sse: f64 = y.iter().zip(y_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Coefficient of determination against the mean of `y` itself.
pub fn r2(y: &DVector<f64>, y_hat: &DVector<f64>) -> Result<f64> {
    check_lengths(y, y_hat, 2)?;
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::ZeroVarianceTarget);
    }
    let mean = y.mean();
    let ss_res: f64 = y.iter().zip(y_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
