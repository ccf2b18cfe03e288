//! Small dense normal-equation helpers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Scaled condition numbers above this are treated as rank deficiency.
pub const MAX_CONDITION: f64 = 1e12;

/// Factored, Jacobi-equilibrated symmetric positive-definite system
/// `A = D^-1 As D^-1` with `D = diag(1/sqrt(A_ii))`.
///
/// Equilibration makes the conditioning test independent of column units
/// (meters vs. m/s) and of very tight or very loose pseudo-measurements.
pub(crate) struct SpdSystem {
    scale: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SpdSystem {
    /// `on_singular` maps the scaled condition number to the caller's
    /// error variant.
    pub fn factor(a: &DMatrix<f64>, on_singular: fn(f64) -> Error) -> Result<Self> {
        let n = a.nrows();
        let diag = a.diagonal();
        if diag.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(on_singular(f64::INFINITY));
        }
        let scale = diag.map(|d| 1.0 / d.sqrt());
        let mut scaled = a.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= scale[i] * scale[j];
            }
        }
        // Symmetrize round-off before the eigen solve.
        let scaled = (&scaled + scaled.transpose()) * 0.5;
        let eig = scaled.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(on_singular(condition));
        }
        let chol = Cholesky::new(scaled).ok_or_else(|| on_singular(condition))?;
        Ok(Self { scale, chol })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let y = self.chol.solve(&rhs.component_mul(&self.scale));
        y.component_mul(&self.scale)
    }

    /// Materializes `A^-1`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.chol.inverse();
        let n = inv.nrows();
        let mut out = DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * self.scale[i] * self.scale[j]);
        out = (&out + out.transpose()) * 0.5;
        out
    }
}

/// `G' diag(w) G`.
pub(crate) fn weighted_gram(g: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut gw = g.clone();
    for (mut row, wi) in gw.row_iter_mut().zip(w.iter()) {
        row *= *wi;
    }
    g.transpose() * gw
}

/// `G' diag(w) r`.
pub(crate) fn weighted_rhs(g: &DMatrix<f64>, w: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    g.transpose() * r.component_mul(w)
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized first).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().amax()
}
