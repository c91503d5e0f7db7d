//! Newey-West HAC covariance with Bartlett weights.
//!
//! ```text
//! g_t  = x_t e_t
//! G_l  = sum_{t>=l} g_t g_{t-l}'
//! S    = G_0 + sum_{l=1..L} (1 - l/(L+1)) (G_l + G_l')
//! cov  = (X'X)^-1 S (X'X)^-1 * n / (n - k)
//! ```

use nalgebra::DMatrix;

use super::{ols_fit, FactorModelError};

/// Coefficient covariance for residuals of an OLS fit on `x`.
pub fn nw_cov(
    x: &DMatrix<f64>,
    residuals: &[f64],
    lag: usize,
) -> Result<DMatrix<f64>, FactorModelError> {
    // Bread from the same QR path the fit uses; y is irrelevant.
    let fit = ols_fit(&vec![0.0; x.nrows()], x)?;
    nw_cov_with_bread(x, residuals, lag, &fit.xtx_inv)
}

pub fn nw_cov_with_bread(
    x: &DMatrix<f64>,
    residuals: &[f64],
    lag: usize,
    xtx_inv: &DMatrix<f64>,
) -> Result<DMatrix<f64>, FactorModelError> {
    let (n, k) = x.shape();
    if residuals.len() != n {
        return Err(FactorModelError::DimensionMismatch(format!(
            "{} residuals for {n} rows",
            residuals.len()
        )));
    }
    if lag >= n {
        return Err(FactorModelError::LagTooLarge { lag, nobs: n });
    }
    if n <= k {
        return Err(FactorModelError::TooFewObservations { nobs: n, ncols: k });
    }
    let mut scores = x.clone();
    for (mut row, e) in scores.row_iter_mut().zip(residuals) {
        row *= *e;
    }
    let mut meat = scores.transpose() * &scores;
    for l in 1..=lag {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let lead = scores.rows(l, n - l);
        let lagged = scores.rows(0, n - l);
        let gamma = lead.transpose() * lagged;
        meat += (&gamma + gamma.transpose()) * w;
    }
    let mut cov = xtx_inv * meat * xtx_inv * (n as f64 / (n - k) as f64);
    // Exact symmetry.
    let t = cov.transpose();
    cov = (cov + t) * 0.5;
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factormodel::design_matrix;

    #[test]
    fn zero_residuals_zero_cov() {
        let f: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = design_matrix(30, &[f]).unwrap();
        let cov = nw_cov(&x, &[0.0; 30], 5).unwrap();
        assert!(cov.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lag_too_large() {
        let x = design_matrix(5, &[]).unwrap();
        assert_eq!(
            nw_cov(&x, &[0.0; 5], 5).unwrap_err(),
            FactorModelError::LagTooLarge { lag: 5, nobs: 5 }
        );
    }

    #[test]
    fn intercept_only_lag_zero_is_scaled_variance() {
        // Intercept only, L = 0: var(alpha) = sum(e^2) / n^2 * n/(n-1) = s^2 / n.
        let e = [0.5, -1.0, 0.25, 0.25, 0.0, -0.5, 0.5];
        let n = e.len() as f64;
        let x = design_matrix(e.len(), &[]).unwrap();
        let cov = nw_cov(&x, &e, 0).unwrap();
        let ss: f64 = e.iter().map(|v| v * v).sum();
        assert!((cov[(0, 0)] - ss / (n * (n - 1.0))).abs() < 1e-15);
    }
}
