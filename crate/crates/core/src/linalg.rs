//! Symmetric positive-definite factorization with an escalating jitter ladder.
//!
//! Every linear solve against a covariance matrix in this crate goes through
//! [`SpdFactor`]. When the plain Cholesky factorization fails, a multiple of
//! the identity is added, scaled by the mean of the diagonal, stepping through
//! [`JITTER_LADDER`]. The jitter that finally succeeded is kept on the factor so
//! callers can report it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter levels tried in order, as multiples of `mean(diag(A))`.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdFactor {
    /// Factor `a`, escalating jitter until the factorization succeeds.
    pub fn new(a: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        Self::with_ladder(a, context, &JITTER_LADDER)
    }

    /// Factor `a` as given; no jitter is added.
    pub fn exact(a: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        Self::with_ladder(a, context, &[0.0])
    }

    fn with_ladder(a: &DMatrix<f64>, context: &'static str, ladder: &[f64]) -> Result<Self> {
        assert!(a.is_square(), "SpdFactor requires a square matrix");
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{context}: matrix has non-finite entries")));
        }
        let n = a.nrows();
        let scale = if n == 0 { 1.0 } else { a.diagonal().mean() };
        let mut last = 0.0;
        for &rel in ladder {
            let jitter = rel * scale;
            if rel > 0.0 && !(jitter > 0.0) {
                break;
            }
            let mut m = a.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    m[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(m) {
                if chol.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                    return Ok(SpdFactor { chol, jitter });
                }
            }
            last = jitter;
        }
        Err(Error::Factorization { context, jitter: last })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Absolute jitter that was added to the diagonal (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor `L` with `A + jitter·I = L Lᵀ`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹ b`.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Twice the sum of the log factor diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L⁻¹`, lower triangular.
    pub fn lower_inverse(&self) -> DMatrix<f64> {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let ls = l.as_slice();
        let mut x = DMatrix::zeros(n, n);
        for (j, col) in x.as_mut_slice().chunks_exact_mut(n.max(1)).enumerate().take(n) {
            col[j] = 1.0;
            for k in j..n {
                let lk = &ls[k * n..(k + 1) * n];
                let xk = col[k] / lk[k];
                col[k] = xk;
                if xk != 0.0 {
                    for (c, &lik) in col[k + 1..].iter_mut().zip(&lk[k + 1..]) {
                        *c -= lik * xk;
                    }
                }
            }
        }
        x
    }

    /// Explicit inverse `L⁻ᵀL⁻¹`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let li = self.lower_inverse();
        symmetrize(li.transpose() * &li)
    }
}

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// `tr(Aᵀ B)`, i.e. the Frobenius inner product.
pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Rows of `m` selected by `idx`, in order.
pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
