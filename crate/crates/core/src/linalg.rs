//! Dense symmetric linear algebra on flat buffers, backed by faer.
//!
//! Symmetric matrices are stored as flat `n * n` buffers; for a symmetric matrix
//! row-major and column-major layouts coincide, so buffers are handed to faer as
//! column-major views without copying. All faer calls run sequentially so results
//! are bit-identical whatever the thread pool looks like.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{MatMut, MatRef, Par, Side};

use crate::error::{Error, Result};

/// Retries after the first jittered attempt, each multiplying the jitter by ten.
pub const MAX_JITTER_RETRIES: usize = 4;

pub fn sym_eigenvalues(data: &[f64], n: usize) -> Result<Vec<f64>> {
    let a = MatRef::from_column_major_slice(data, n, n);
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))
}

/// Eigenvalues (ascending) and column-major eigenvectors of a symmetric matrix.
pub fn sym_eigen(data: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = MatRef::from_column_major_slice(data, n, n);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    let vals = (0..n).map(|i| evd.S()[i]).collect();
    let u = evd.U();
    let mut vecs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            vecs[j * n + i] = u[(i, j)];
        }
    }
    Ok((vals, vecs))
}

/// Lower Cholesky factor `L` with `L L^T = A + jitter I`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    /// Column-major; `L` in the lower triangle, upper triangle meaningless.
    data: Vec<f64>,
    pub jitter: f64,
}

impl Cholesky {
    /// Factors `a + jitter I`, escalating the jitter tenfold on failure.
    ///
    /// Takes ownership to factor in place. The strict upper triangle is left
    /// untouched by the factorisation, which is what allows a failed attempt to be
    /// restored from it.
    pub fn factor(mut a: Vec<f64>, n: usize, jitter: f64) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
        let mut jitter = jitter;
        for attempt in 0..=MAX_JITTER_RETRIES {
            if attempt > 0 {
                // Restore the lower triangle (column-major) from the upper one.
                for j in 0..n {
                    for i in j + 1..n {
                        a[j * n + i] = a[i * n + j];
                    }
                }
                jitter *= 10.0;
            }
            for i in 0..n {
                a[i * n + i] = diag[i] + jitter;
            }
            let stack = MemStack::new(&mut mem);
            let view = MatMut::from_column_major_slice_mut(&mut a, n, n);
            if cholesky_in_place(view, Default::default(), Par::Seq, stack, Default::default()).is_ok() {
                return Ok(Self { n, data: a, jitter });
            }
            log::debug!("cholesky failed with jitter {jitter:e}; escalating");
        }
        Err(Error::Numerical(format!(
            "cholesky of {n}x{n} matrix failed after {MAX_JITTER_RETRIES} jitter escalations (last {jitter:e})"
        )))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn l(&self) -> MatRef<'_, f64> {
        MatRef::from_column_major_slice(&self.data, self.n, self.n)
    }

    /// Solves `(A + jitter I) x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut rhs = MatMut::from_column_major_slice_mut(b, n, 1);
        solve_lower_triangular_in_place(self.l(), rhs.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l().transpose(), rhs, Par::Seq);
    }

    /// `L z`, using only the lower triangle.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for (j, &zj) in z.iter().enumerate() {
            let col = &self.data[j * n..(j + 1) * n];
            for i in j..n {
                out[i] += col[i] * zj;
            }
        }
        out
    }
}

/// `y = A x` for a row-major `rows x cols` matrix.
pub fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(x.len(), cols);
    a.chunks(cols.max(1)).take(rows).map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}
