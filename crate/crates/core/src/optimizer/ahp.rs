use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;
const RECIPROCAL_TOL: f64 = 1e-9;

/// Scalarisation weights for (cost, loss).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub w1: f64,
    pub w2: f64,
}

impl WeightSpec {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        let in_unit = |w: f64| (0.0..=1.0).contains(&w);
        if !in_unit(w1) || !in_unit(w2) || (w1 + w2 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "weights must lie in [0, 1] and sum to 1, got ({w1}, {w2})"
            )));
        }
        Ok(Self { w1, w2 })
    }

    /// `(w1, 1 - w1)`
    pub fn from_w1(w1: f64) -> Result<Self> {
        Self::new(w1, 1.0 - w1)
    }
}

/// Normalised principal eigenvector of a positive reciprocal matrix, by
/// power iteration.
pub fn principal_eigenvector(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::InvalidArgument(
            "pairwise matrix must be square and non-empty".into(),
        ));
    }
    for i in 0..n {
        if (m[(i, i)] - 1.0).abs() > RECIPROCAL_TOL {
            return Err(Error::InvalidArgument(format!("pairwise diagonal entry {i} must be 1")));
        }
        for j in 0..n {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !(a > 0.0) || !a.is_finite() || (a * b - 1.0).abs() > RECIPROCAL_TOL {
                return Err(Error::InvalidArgument(format!(
                    "pairwise matrix is not positive reciprocal at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..POWER_MAX_ITER {
        let mut next: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[(i, j)] * v[j]).sum()).collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta <= POWER_TOL {
            return Ok(v);
        }
    }
    Err(Error::NonConvergence {
        iterations: POWER_MAX_ITER,
        reason: "power iteration on pairwise matrix".into(),
    })
}

/// Weights from a 2x2 pairwise comparison of cost (row 0) against loss.
pub fn ahp_weights(pairwise: &[[f64; 2]; 2]) -> Result<WeightSpec> {
    let m = DMatrix::from_fn(2, 2, |i, j| pairwise[i][j]);
    let v = principal_eigenvector(&m)?;
    Ok(WeightSpec { w1: v[0], w2: v[1] })
}
