//! Dense Cholesky factorization for symmetric positive-definite systems.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A + shift*I = L L^T`,
/// stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a + shift * I`. Only the lower triangle of `a` is read.
    /// Fails if any pivot is not strictly positive (or not finite).
    pub fn factor(a: ArrayView2<'_, f64>, shift: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::ShapeMismatch(format!("expected a square matrix, got {}x{}", n, a.ncols())));
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (row_i, row_j) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let mut v = a[[i, j]] - dot;
                if i == j {
                    v += shift;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::FactorizationFailure { pivot: i });
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `(A + shift*I) x = b` by forward and back substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length");
        let l = &self.lower;
        let mut z = b.to_vec();
        for i in 0..n {
            let dot: f64 = l[i * n..i * n + i].iter().zip(&z[..i]).map(|(a, b)| a * b).sum();
            z[i] = (z[i] - dot) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for k in i + 1..n {
                v -= l[k * n + i] * z[k];
            }
            z[i] = v / l[i * n + i];
        }
        z
    }

    /// The factor as a dense matrix.
    pub fn lower(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.lower.clone()).expect("square factor")
    }
}

/// `(A + shift*I) x` for a square `A`.
pub fn shifted_matvec(a: ArrayView2<'_, f64>, shift: f64, x: &[f64]) -> Vec<f64> {
    a.rows()
        .into_iter()
        .zip(x)
        .map(|(row, xi)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() + shift * xi)
        .collect()
}

/// Dense matrix-vector product `A x`.
pub fn matvec(a: ArrayView2<'_, f64>, x: &[f64]) -> Vec<f64> {
    a.rows()
        .into_iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}
