//! Symmetric positive-definite factorization with the crate-wide jitter policy.
//!
//! A failed Cholesky factorization is retried exactly once with
//! `1e-10 * trace / n` added to the diagonal; a second failure is an error.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) const JITTER_SCALE: f64 = 1e-10;

/// Cholesky factor of an SPD matrix together with the jitter that was needed.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    n: usize,
    jitter: f64,
}

impl SpdFactor {
    pub fn new(matrix: DMatrix<f64>, what: &str) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::Dimension {
                expected: n,
                got: matrix.ncols(),
            });
        }
        if n == 0 {
            return Ok(SpdFactor {
                chol: None,
                n,
                jitter: 0.0,
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{what}: non-finite entry")));
        }
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok(SpdFactor {
                chol: Some(chol),
                n,
                jitter: 0.0,
            });
        }
        let trace = matrix.trace();
        let jitter = JITTER_SCALE * trace.abs().max(f64::MIN_POSITIVE) / n as f64;
        let mut jittered = matrix;
        for i in 0..n {
            jittered[(i, i)] += jitter;
        }
        match Cholesky::new(jittered) {
            Some(chol) => {
                log::warn!("{what}: factorization needed diagonal jitter {jitter:.3e}");
                Ok(SpdFactor {
                    chol: Some(chol),
                    n,
                    jitter,
                })
            }
            None => Err(Error::IllConditioned {
                what: what.to_string(),
                detail: format!("not positive definite after jitter {jitter:.3e} (n = {n})"),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `log |A|` from the pivots; zero for the empty matrix.
    pub fn log_det(&self) -> f64 {
        match &self.chol {
            None => 0.0,
            Some(c) => {
                let l = c.l_dirty();
                2.0 * (0..self.n).map(|i| l[(i, i)].ln()).sum::<f64>()
            }
        }
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            None => DMatrix::zeros(0, b.ncols()),
            Some(c) => c.solve(b),
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            None => DVector::zeros(0),
            Some(c) => c.solve(b),
        }
    }

    /// `L^{-1} b` where `A = L L^T`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            None => DMatrix::zeros(0, b.ncols()),
            Some(c) => c
                .l_dirty()
                .solve_lower_triangular(b)
                .expect("Cholesky factor has a positive diagonal"),
        }
    }

    pub fn whiten_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            None => DVector::zeros(0),
            Some(c) => c
                .l_dirty()
                .solve_lower_triangular(b)
                .expect("Cholesky factor has a positive diagonal"),
        }
    }

    /// `b^T A^{-1} b`.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        let w = self.whiten_vec(b);
        w.dot(&w)
    }

    /// `L b`; maps standard normal draws to draws with covariance `A`.
    pub fn color_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            None => DVector::zeros(0),
            Some(c) => c.l() * b,
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        match &self.chol {
            None => DMatrix::zeros(0, 0),
            Some(c) => c.inverse(),
        }
    }
}

/// Average with the transpose; removes round-off asymmetry from products.
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Stacks the selected rows of `src` into a new matrix.
pub(crate) fn select_rows(src: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), src.ncols(), |r, c| src[(rows[r], c)])
}
