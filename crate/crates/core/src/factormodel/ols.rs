use nalgebra::{DMatrix, DVector};

use super::FactorModelError;

/// A column is treated as spanned when its QR pivot falls below this fraction of its norm.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(X'X)^-1`, computed from the triangular factor.
    pub xtx_inv: DMatrix<f64>,
    pub nobs: usize,
}

impl OlsFit {
    pub fn ssr(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Intercept column followed by the given regressors.
pub fn design_matrix(
    nobs: usize,
    regressors: &[Vec<f64>],
) -> Result<DMatrix<f64>, FactorModelError> {
    if let Some(bad) = regressors.iter().find(|c| c.len() != nobs) {
        return Err(FactorModelError::DimensionMismatch(format!(
            "regressor has {} rows, expected {nobs}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(nobs, regressors.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            regressors[j - 1][i]
        }
    }))
}

/// Least squares via Householder QR.
pub fn ols_fit(y: &[f64], x: &DMatrix<f64>) -> Result<OlsFit, FactorModelError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(FactorModelError::DimensionMismatch(format!(
            "y has {} rows, X has {n}",
            y.len()
        )));
    }
    if n <= k {
        return Err(FactorModelError::TooFewObservations { nobs: n, ncols: k });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let col_norm = x.column(j).norm();
        if col_norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * col_norm {
            return Err(FactorModelError::RankDeficient { column: j });
        }
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(FactorModelError::RankDeficient { column: k - 1 })?;
    let residuals = &yv - x * &coefficients;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(FactorModelError::RankDeficient { column: k - 1 })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    Ok(OlsFit {
        coefficients,
        residuals,
        xtx_inv,
        nobs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_regression() {
        let f: Vec<f64> = (0..50)
            .map(|i| ((i * 37) % 11) as f64 / 100.0 - 0.05)
            .collect();
        let x = design_matrix(50, std::slice::from_ref(&f)).unwrap();
        let fit = ols_fit(&f, &x).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-14);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-12);
        assert!(fit.residuals.amax() < 1e-14);
    }

    #[test]
    fn intercept_only_constant() {
        let y = vec![0.0037; 30];
        let x = design_matrix(30, &[]).unwrap();
        let fit = ols_fit(&y, &x).unwrap();
        assert!((fit.coefficients[0] - 0.0037).abs() < 1e-16);
    }

    #[test]
    fn spanned_regressor_is_rank_deficient() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).cos()).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let x = design_matrix(40, &[a, b, c]).unwrap();
        assert_eq!(
            ols_fit(&vec![0.0; 40], &x).unwrap_err(),
            FactorModelError::RankDeficient { column: 3 }
        );
    }

    #[test]
    fn too_few_observations() {
        let x = design_matrix(2, &[vec![1.0, 2.0]]).unwrap();
        assert_eq!(
            ols_fit(&[1.0, 2.0], &x).unwrap_err(),
            FactorModelError::TooFewObservations { nobs: 2, ncols: 2 }
        );
    }
}
