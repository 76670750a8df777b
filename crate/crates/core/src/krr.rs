//! Kernel ridge regression on a precomputed kernel.
//!
//! Dual coefficients solve `(K + lambda I) alpha = y`; predictions are
//! `K_cross alpha`. Binary targets are coded -1/+1 and classified by the
//! sign of the prediction.

use crate::error::{Error, Result};
use crate::kernels::KernelMatrix;
use crate::linalg::{matvec, shifted_matvec, Cholesky};

/// Number of doublings tried by [`select_lambda`] after the first rung.
pub const LADDER_STEPS: usize = 64;

/// Relative size of the first ladder rung: `lambda_0 = 1e-8 * mean(diag K)`.
pub const LADDER_BASE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub alpha: Vec<f64>,
    pub lambda: f64,
    /// Sample ids of the training kernel rows the coefficients belong to.
    pub train_ids: Vec<usize>,
}

fn first_rung(k: &KernelMatrix) -> f64 {
    let mean_diag = k.mean_diagonal();
    if mean_diag > 0.0 && mean_diag.is_finite() {
        LADDER_BASE * mean_diag
    } else {
        LADDER_BASE
    }
}

/// Smallest `lambda_0 * 2^k` (k = 0..=64) for which `K + lambda I` admits a
/// Cholesky factorization. Returns the factor along with lambda.
pub fn select_lambda_with_factor(k: &KernelMatrix) -> Result<(f64, Cholesky)> {
    if !k.is_square() {
        return Err(Error::ShapeMismatch(format!("kernel is {:?}, expected square", k.values.dim())));
    }
    let base = first_rung(k);
    for step in 0..=LADDER_STEPS {
        let lambda = base * 2f64.powi(step as i32);
        if let Ok(factor) = Cholesky::factor(k.values.view(), lambda) {
            return Ok((lambda, factor));
        }
    }
    Err(Error::LadderExhausted(LADDER_STEPS))
}

/// The minimal regularization on the doubling ladder that makes `K + lambda I`
/// numerically positive definite.
pub fn select_lambda(k: &KernelMatrix) -> Result<f64> {
    select_lambda_with_factor(k).map(|(lambda, _)| lambda)
}

fn check_system(k: &KernelMatrix, y: &[f64]) -> Result<()> {
    if !k.is_square() {
        return Err(Error::ShapeMismatch(format!("kernel is {:?}, expected square", k.values.dim())));
    }
    if y.len() != k.nrows() {
        return Err(Error::ShapeMismatch(format!("{} targets for a {}x{} kernel", y.len(), k.nrows(), k.ncols())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression target".into()));
    }
    Ok(())
}

fn solve_refined(k: &KernelMatrix, factor: &Cholesky, lambda: f64, y: &[f64]) -> Result<Vec<f64>> {
    let bound = 1e-8 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut alpha = factor.solve(y);
    let mut residual = f64::INFINITY;
    // Up to four rounds of iterative refinement for ill-conditioned kernels.
    for round in 0..5 {
        let r: Vec<f64> = y
            .iter()
            .zip(shifted_matvec(k.values.view(), lambda, &alpha))
            .map(|(b, ax)| b - ax)
            .collect();
        residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual <= bound {
            return Ok(alpha);
        }
        if round < 4 {
            let correction = factor.solve(&r);
            alpha.iter_mut().zip(correction).for_each(|(a, c)| *a += c);
        }
    }
    Err(Error::InaccurateSolve { residual, bound })
}

/// Fits the dual coefficients for a given `lambda`.
pub fn fit_krr(k: &KernelMatrix, y: &[f64], lambda: f64) -> Result<KrrModel> {
    check_system(k, y)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let factor = Cholesky::factor(k.values.view(), lambda)?;
    let alpha = solve_refined(k, &factor, lambda, y)?;
    Ok(KrrModel {
        alpha,
        lambda,
        train_ids: k.row_ids.clone(),
    })
}

/// Selects lambda with [`select_lambda`] and fits in one factorization.
pub fn fit_krr_auto(k: &KernelMatrix, y: &[f64]) -> Result<KrrModel> {
    check_system(k, y)?;
    let (lambda, factor) = select_lambda_with_factor(k)?;
    let alpha = solve_refined(k, &factor, lambda, y)?;
    Ok(KrrModel {
        alpha,
        lambda,
        train_ids: k.row_ids.clone(),
    })
}

impl KrrModel {
    /// `K_cross alpha` for a (test x train) kernel.
    pub fn predict(&self, k_cross: &KernelMatrix) -> Result<Vec<f64>> {
        if k_cross.ncols() != self.alpha.len() {
            return Err(Error::ShapeMismatch(format!(
                "cross kernel has {} columns, model has {} coefficients",
                k_cross.ncols(),
                self.alpha.len()
            )));
        }
        Ok(matvec(k_cross.values.view(), &self.alpha))
    }

    /// Sign of the prediction; an exact zero maps to +1.
    pub fn classify(&self, k_cross: &KernelMatrix) -> Result<Vec<i8>> {
        Ok(self.predict(k_cross)?.into_iter().map(sign_label).collect())
    }
}

#[inline]
pub fn sign_label(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;
    use ndarray::{array, Array2};

    fn kernel(values: Array2<f64>) -> KernelMatrix {
        KernelMatrix::new(values, KernelKind::Custom)
    }

    #[test]
    fn identity_takes_first_rung() {
        assert_eq!(select_lambda(&kernel(Array2::eye(4))).unwrap(), 1e-8);
    }

    #[test]
    fn rank_one_psd_takes_first_rung() {
        assert_eq!(select_lambda(&kernel(Array2::ones((3, 3)))).unwrap(), 1e-8);
    }

    #[test]
    fn indefinite_kernel_needs_rung_above_negative_eigenvalue() {
        // Eigenvalues of [[a, b], [b, a]] are a + b and a - b: here 1.0 and -0.1.
        let k = kernel(array![[0.45, 0.55], [0.55, 0.45]]);
        let lambda = select_lambda(&k).unwrap();
        assert!(lambda > 0.1, "{lambda}");
        assert!(lambda / 2.0 <= 0.1);
        let ratio = lambda / (1e-8 * 0.45);
        assert_eq!(ratio.log2().round(), ratio.log2());
    }

    #[test]
    fn simple_solves() {
        let m = fit_krr(&kernel(Array2::eye(2)), &[2.0, 4.0], 1.0).unwrap();
        assert!((m.alpha[0] - 1.0).abs() < 1e-15 && (m.alpha[1] - 2.0).abs() < 1e-15);
        let z = fit_krr(&kernel(Array2::zeros((3, 3))), &[1.5, -2.0, 7.0], 1.0).unwrap();
        assert_eq!(z.alpha, vec![1.5, -2.0, 7.0]);
    }

    #[test]
    fn prediction_shapes_and_ties() {
        let m = KrrModel {
            alpha: vec![0.3, -0.3],
            lambda: 1.0,
            train_ids: vec![0, 1],
        };
        let zeros = kernel(Array2::zeros((1, 2)));
        assert_eq!(m.predict(&zeros).unwrap(), vec![0.0]);
        assert_eq!(m.classify(&zeros).unwrap(), vec![1]);
        let eye = kernel(Array2::eye(2));
        assert_eq!(m.predict(&eye).unwrap(), m.alpha);
        assert_eq!(m.classify(&eye).unwrap(), vec![1, -1]);
        assert!(matches!(m.predict(&kernel(Array2::eye(3))), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn error_paths() {
        let k = kernel(Array2::eye(2));
        assert!(fit_krr(&k, &[1.0], 1.0).is_err());
        assert!(fit_krr(&k, &[1.0, 2.0], 0.0).is_err());
        assert!(matches!(
            fit_krr(&kernel(array![[1.0, 2.0], [2.0, 1.0]]), &[1.0, 1.0], 1e-3),
            Err(Error::FactorizationFailure { .. })
        ));
        assert!(select_lambda(&kernel(Array2::zeros((2, 3)))).is_err());
    }
}
