//! Ordinary least squares with an intercept, plus MAE / RMSE.
//!
//! The fit solves the least-squares problem through a Householder QR
//! factorization of the design matrix with a leading column of ones. If the
//! factorization reveals rank deficiency (for example a full one-hot block
//! next to the intercept) the problem is re-solved with a tiny ridge term on
//! the slope coefficients.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::matrix::Matrix;

/// Ridge strength used when the design matrix is rank deficient.
pub const RIDGE_FALLBACK: f64 = 1e-8;

// |R_jj| below this fraction of the largest diagonal counts as rank loss
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinRegError {
    #[error("need more observations than features (m = {m}, n = {n})")]
    Underdetermined { m: usize, n: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("metrics need at least one observation")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub feature_names: Vec<String>,
    /// Zero for a plain OLS fit, otherwise the ridge strength that was needed.
    pub ridge_epsilon: f64,
}

impl LinRegModel {
    /// `β₀ + Σ βᵢ xᵢ`.
    pub fn predict(&self, x: &[f64]) -> Result<f64, LinRegError> {
        if x.len() != self.coefficients.len() {
            return Err(LinRegError::DimensionMismatch {
                expected: self.coefficients.len(),
                got: x.len(),
            });
        }
        Ok(self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>, LinRegError> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }
}

/// Least-squares fit of `y ≈ β₀ + X β`.
pub fn linreg_fit(x: &Matrix, y: &[f64], feature_names: &[String]) -> Result<LinRegModel, LinRegError> {
    let (m, n) = (x.rows(), x.cols());
    if y.len() != m {
        return Err(LinRegError::DimensionMismatch { expected: m, got: y.len() });
    }
    if feature_names.len() != n {
        return Err(LinRegError::DimensionMismatch {
            expected: n,
            got: feature_names.len(),
        });
    }
    if m <= n {
        return Err(LinRegError::Underdetermined { m, n });
    }
    if !x.as_slice().iter().all(|v| v.is_finite()) {
        return Err(LinRegError::NonFinite("design matrix"));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(LinRegError::NonFinite("targets"));
    }

    let (beta, full_rank) = solve_qr(x, y, 0.0);
    let (beta, ridge) = if full_rank {
        (beta, 0.0)
    } else {
        (solve_qr(x, y, RIDGE_FALLBACK).0, RIDGE_FALLBACK)
    };
    Ok(LinRegModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        feature_names: feature_names.to_vec(),
        ridge_epsilon: ridge,
    })
}

/// Solves min ‖A β − y‖² + λ‖β₁..‖² where A = [1 | X]. Returns the
/// coefficients (intercept first) and whether R had full numerical rank.
fn solve_qr(x: &Matrix, y: &[f64], lambda: f64) -> (Vec<f64>, bool) {
    let (m, n) = (x.rows(), x.cols());
    let p = n + 1;
    let extra = if lambda > 0.0 { n } else { 0 };
    let rows = m + extra;
    let sl = math::sqrt(lambda);

    // column-major copy of the augmented design
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut ones = vec![1.0; m];
    ones.resize(rows, 0.0);
    cols.push(ones);
    for j in 0..n {
        let mut c: Vec<f64> = (0..m).map(|i| x.get(i, j)).collect();
        c.resize(rows, 0.0);
        if extra > 0 {
            c[m + j] = sl;
        }
        cols.push(c);
    }
    let mut rhs = y.to_vec();
    rhs.resize(rows, 0.0);

    let mut diag = vec![0.0; p];
    for j in 0..p {
        let (head, tail) = cols.split_at_mut(j + 1);
        let col = &mut head[j];
        let norm = math::sqrt(col[j..].iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        col[j] -= alpha;
        let vnorm2: f64 = col[j..].iter().map(|v| v * v).sum();
        let v = &col[j..];
        for other in tail.iter_mut() {
            let s: f64 = v.iter().zip(&other[j..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * s / vnorm2;
            for (o, vi) in other[j..].iter_mut().zip(v) {
                *o -= f * vi;
            }
        }
        let s: f64 = v.iter().zip(&rhs[j..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * s / vnorm2;
        for (o, vi) in rhs[j..].iter_mut().zip(v) {
            *o -= f * vi;
        }
        diag[j] = alpha;
    }

    let max_diag = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let full_rank = diag.iter().all(|d| d.abs() > RANK_TOL * max_diag);

    // back substitution on R (diag holds R_jj, cols[c][r] holds R_rc for r < c)
    let mut beta = vec![0.0; p];
    for j in (0..p).rev() {
        if diag[j] == 0.0 {
            beta[j] = 0.0;
            continue;
        }
        let mut s = rhs[j];
        for c in j + 1..p {
            s -= cols[c][j] * beta[c];
        }
        beta[j] = s / diag[j];
    }
    (beta, full_rank)
}

/// Mean absolute error and root mean square error over one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub m: usize,
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<(), LinRegError> {
    if y.len() != yhat.len() {
        return Err(LinRegError::DimensionMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(LinRegError::Empty);
    }
    Ok(())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64, LinRegError> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, LinRegError> {
    check_pair(y, yhat)?;
    let mse = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(math::sqrt(mse))
}

pub fn evaluate(y: &[f64], yhat: &[f64]) -> Result<EvalMetrics, LinRegError> {
    Ok(EvalMetrics {
        mae: mae(y, yhat)?,
        rmse: rmse(y, yhat)?,
        m: y.len(),
    })
}
