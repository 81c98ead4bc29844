//! Least-squares fit of `u ≈ a₂ (1/ε)² + a₁ (1/ε) + a₀`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    /// Euclidean norm of the residual vector.
    pub residual_norm: f64,
}

impl FitResult {
    pub fn eval(&self, eps: f64) -> f64 {
        let s = 1.0 / eps;
        (self.a2 * s + self.a1) * s + self.a0
    }
}

/// Fits `(eps, u)` pairs through the normal equations of the column-scaled
/// design `[(1/ε)², 1/ε, 1]`.
pub fn fit_inverse_quadratic(rows: &[(f64, f64)]) -> Result<FitResult> {
    for &(eps, u) in rows {
        ensure_finite("fit data", &[eps, u])?;
        if eps <= 0.0 {
            return Err(Error::Domain(format!("eps must be positive, got {eps}")));
        }
    }
    let mut distinct: Vec<f64> = rows.iter().map(|r| r.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::RankDeficient(format!("need at least 3 distinct eps values, got {}", distinct.len())));
    }

    let design: Vec<[f64; 3]> = rows.iter().map(|&(eps, _)| [1.0 / (eps * eps), 1.0 / eps, 1.0]).collect();
    let mut scale = [0.0f64; 3];
    for row in &design {
        for j in 0..3 {
            scale[j] = scale[j].max(row[j].abs());
        }
    }

    let mut normal = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (row, &(_, u)) in design.iter().zip(rows) {
        let scaled = [row[0] / scale[0], row[1] / scale[1], row[2] / scale[2]];
        for i in 0..3 {
            rhs[i] += scaled[i] * u;
            for j in 0..3 {
                normal[i][j] += scaled[i] * scaled[j];
            }
        }
    }
    let coef = solve3(normal, rhs)?;
    let (a2, a1, a0) = (coef[0] / scale[0], coef[1] / scale[1], coef[2] / scale[2]);

    let residual_norm =
        design.iter().zip(rows).map(|(row, &(_, u))| (a2 * row[0] + a1 * row[1] + a0 - u).powi(2)).sum::<f64>().sqrt();
    Ok(FitResult { a2, a1, a0, residual_norm })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    let norm = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[pivot][col].abs() <= 1e-13 * norm {
            return Err(Error::RankDeficient("normal matrix is singular".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (dst, src) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}
