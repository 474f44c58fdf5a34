//! Ordinary least squares with intercept, solved through the normal
//! equations and a dense Cholesky factorization. A singular system gets one
//! retry with a small ridge term on the diagonal.

use crate::error::{Error, Result};

/// Ridge added to the normal-matrix diagonal when plain OLS is singular.
const JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Intercept first, then one coefficient per feature.
    coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn fit(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let d = rows[0].len() + 1; // augmented with the intercept column

        // Normal system A beta = b with A = X'X, b = X'y over augmented X.
        let mut a = vec![0.0; d * d];
        let mut b = vec![0.0; d];
        for (row, &y) in rows.iter().zip(targets) {
            let aug = |j: usize| if j == 0 { 1.0 } else { row[j - 1] };
            for i in 0..d {
                let xi = aug(i);
                b[i] += xi * y;
                for j in i..d {
                    a[i * d + j] += xi * aug(j);
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                a[i * d + j] = a[j * d + i];
            }
        }

        let coefficients = match cholesky_solve(&a, &b, d) {
            Some(beta) => beta,
            None => {
                let mut ridged = a.clone();
                for i in 0..d {
                    ridged[i * d + i] += JITTER;
                }
                cholesky_solve(&ridged, &b, d)
                    .ok_or(Error::Numerical("normal equations are not solvable"))?
            }
        };
        Ok(LinearModel { coefficients })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() + 1 != self.coefficients.len() {
            return Err(Error::FeatureArity {
                expected: self.coefficients.len() - 1,
                got: x.len(),
            });
        }
        let mut sum = self.coefficients[0];
        for (c, v) in self.coefficients[1..].iter().zip(x) {
            sum += c * v;
        }
        Ok(sum)
    }

    /// Intercept followed by per-feature coefficients.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

/// Solve the symmetric positive-definite system `a x = b` (row-major,
/// `d x d`). Returns `None` when the factorization breaks down.
fn cholesky_solve(a: &[f64], b: &[f64], d: usize) -> Option<Vec<f64>> {
    // Lower-triangular factor L with a = L L'.
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i * d + i] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * d + k] * y[k];
        }
        y[i] = sum / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in i + 1..d {
            sum -= l[k * d + i] * x[k];
        }
        x[i] = sum / l[i * d + i];
    }
    Some(x)
}
