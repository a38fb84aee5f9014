//! Fitting the two-groups model from a panel of z-values.

mod empirical_null;
mod npmle;
mod parametric;

pub use empirical_null::{fit_empirical_null, fit_empirical_null_z, EmpiricalNullOptions};
pub use npmle::{fit_npmle_grid, NpmleOptions, P0Mode};
pub use parametric::{fit_parametric, ParametricOptions, ParametricStart};

use crate::model::TwoGroupsModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FitWarning {
    /// The effect variance hit its floor and was clamped.
    VarianceAtFloor { floor: f64 },
    /// The m ≥ 0 constraint is active.
    MeanAtZeroBound,
    /// An extreme grid point carries a large share of g; the grid probably
    /// does not cover the effects the data support.
    BoundaryMass { point: f64, weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: TwoGroupsModel,
    pub log_likelihood: f64,
    /// Number of EM updates performed.
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood before the first update and after every update.
    pub trace: Vec<f64>,
    pub warnings: Vec<FitWarning>,
}

impl FitResult {
    /// Largest decrease between consecutive trace entries (0 for a monotone trace).
    pub fn max_trace_decrease(&self) -> f64 {
        self.trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE)
}

/// Solves the small dense system `a·x = b` by Gaussian elimination with
/// partial pivoting. Returns `None` for a singular matrix.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
