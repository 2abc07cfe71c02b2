//! Log-scaled matrices for overflow-safe cocycle products.
//!
//! A `ScaledMatrix` represents exp(log_scale) * matrix where the stored
//! matrix is kept at unit spectral norm. Products of hundreds of factors
//! with exponents far from zero stay representable.

use nalgebra::{DMatrix, DVector};

use crate::linalg::operator_norm;

#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    matrix: DMatrix<f64>,
    log_scale: f64,
}

impl ScaledMatrix {
    pub fn identity(dim: usize) -> Self {
        ScaledMatrix {
            matrix: DMatrix::identity(dim, dim),
            log_scale: 0.0,
        }
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Self {
        let norm = operator_norm(&m);
        if norm == 0.0 {
            return ScaledMatrix {
                matrix: m,
                log_scale: f64::NEG_INFINITY,
            };
        }
        ScaledMatrix {
            matrix: m / norm,
            log_scale: norm.ln(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Unit-norm factor (the represented matrix is exp(log_scale) times this).
    pub fn unit_factor(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// self ∘ rhs (apply `rhs` first).
    pub fn compose(&self, rhs: &ScaledMatrix) -> ScaledMatrix {
        let raw = &self.matrix * &rhs.matrix;
        let norm = operator_norm(&raw);
        if norm == 0.0 {
            return ScaledMatrix {
                matrix: raw,
                log_scale: f64::NEG_INFINITY,
            };
        }
        ScaledMatrix {
            matrix: raw / norm,
            log_scale: self.log_scale + rhs.log_scale + norm.ln(),
        }
    }

    /// Adds `delta` to the log scale (multiplies the represented matrix by
    /// exp(delta)).
    pub fn rescale(mut self, delta: f64) -> ScaledMatrix {
        self.log_scale += delta;
        self
    }

    /// Left-multiplies by a raw (unscaled) matrix.
    pub fn premultiply(&self, lhs: &DMatrix<f64>) -> ScaledMatrix {
        let raw = lhs * &self.matrix;
        let norm = operator_norm(&raw);
        if norm == 0.0 {
            return ScaledMatrix {
                matrix: raw,
                log_scale: f64::NEG_INFINITY,
            };
        }
        ScaledMatrix {
            matrix: raw / norm,
            log_scale: self.log_scale + norm.ln(),
        }
    }

    /// log ‖M v‖ for the represented matrix M.
    pub fn apply_log_norm(&self, v: &DVector<f64>) -> f64 {
        (&self.matrix * v).norm().ln() + self.log_scale
    }

    /// Applies M to v, returning (unit direction, log magnitude).
    pub fn apply_scaled(&self, v: &DVector<f64>) -> (DVector<f64>, f64) {
        let w = &self.matrix * v;
        let n = w.norm();
        if n == 0.0 {
            return (w, f64::NEG_INFINITY);
        }
        (w / n, n.ln() + self.log_scale)
    }

    /// log of the operator norm of the represented matrix.
    pub fn log_operator_norm(&self) -> f64 {
        operator_norm(&self.matrix).ln() + self.log_scale
    }

    /// log ‖M⁻¹‖ of the represented (square) matrix.
    ///
    /// The stored factor carries the full condition number, so this is only
    /// finite while cond(M) stays inside f64 range; long-orbit exponent
    /// estimation goes through QR streams instead.
    pub fn log_inverse_norm(&self) -> f64 {
        match self.matrix.clone().try_inverse() {
            Some(inv) => operator_norm(&inv).ln() - self.log_scale,
            None => f64::INFINITY,
        }
    }

    pub fn try_inverse(&self) -> Option<ScaledMatrix> {
        let inv = self.matrix.clone().try_inverse()?;
        let norm = operator_norm(&inv);
        Some(ScaledMatrix {
            matrix: inv / norm,
            log_scale: -self.log_scale + norm.ln(),
        })
    }

    /// Materializes the represented matrix. Overflows to inf for scales
    /// beyond f64 range; intended for small products and reporting.
    pub fn dense(&self) -> DMatrix<f64> {
        &self.matrix * self.log_scale.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn long_products_stay_finite() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let mut p = ScaledMatrix::identity(2);
        for _ in 0..2000 {
            p = p.premultiply(&a);
        }
        // The norm itself is exp(2000 log 2), far outside f64 range.
        assert_abs_diff_eq!(p.log_operator_norm(), 2000.0 * 2.0_f64.ln(), epsilon = 1e-6);
    }

    #[test]
    fn inverse_norm_within_condition_range() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let mut p = ScaledMatrix::identity(2);
        for _ in 0..300 {
            p = p.premultiply(&a);
        }
        assert_abs_diff_eq!(p.log_inverse_norm(), 300.0 * 2.0_f64.ln(), epsilon = 1e-6);
    }

    #[test]
    fn dense_reproduces_small_products() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5]);
        let mut p = ScaledMatrix::identity(2);
        let mut raw = DMatrix::identity(2, 2);
        for _ in 0..10 {
            p = p.premultiply(&a);
            raw = &a * raw;
        }
        let err = (p.dense() - &raw).norm() / raw.norm();
        assert!(err < 1e-12, "relative error {err}");
    }
}

