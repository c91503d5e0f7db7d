use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use super::{design_matrix, nw_cov_with_bread, ols_fit, FactorModelError, RegressionSpec};
use crate::ingest::FactorObservation;
use crate::portfolio::ReturnSeries;
use crate::stats::{stars, student_t_two_sided};

/// Estimates in decimal units; convert at the output boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub spec: RegressionSpec,
    /// `alpha` followed by the model's regressors.
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub nw_se: Vec<f64>,
    pub nw_t: Vec<f64>,
    pub p_values: Vec<f64>,
    pub lag: usize,
    pub nobs: usize,
    pub r2: f64,
}

impl RegressionResult {
    pub fn alpha(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn alpha_se(&self) -> f64 {
        self.nw_se[0]
    }

    pub fn alpha_t(&self) -> f64 {
        self.nw_t[0]
    }

    pub fn stars(&self, i: usize) -> &'static str {
        stars(self.p_values[i])
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.coefficients[i])
    }
}

/// Regresses the series' excess returns on the model's factors, matched by date.
pub fn run_spec(
    series: &ReturnSeries,
    factors: &[FactorObservation],
    spec: RegressionSpec,
    lag: usize,
) -> Result<RegressionResult, FactorModelError> {
    let by_date: BTreeMap<NaiveDate, &FactorObservation> =
        factors.iter().map(|f| (f.date, f)).collect();
    let k = spec.factor_count();
    let mut columns = vec![Vec::with_capacity(series.len()); k];
    for d in &series.dates {
        let row = by_date
            .get(d)
            .ok_or(FactorModelError::MissingFactorDate(*d))?
            .factors();
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    let y = &series.excess_return;
    let x = design_matrix(y.len(), &columns)?;
    let fit = ols_fit(y, &x)?;
    let cov = nw_cov_with_bread(&x, fit.residuals.as_slice(), lag, &fit.xtx_inv)?;

    let n = y.len();
    let ncoef = k + 1;
    let coefficients: Vec<f64> = fit.coefficients.iter().copied().collect();
    let nw_se: Vec<f64> = (0..ncoef).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let nw_t: Vec<f64> = coefficients
        .iter()
        .zip(&nw_se)
        .map(|(b, s)| b / s)
        .collect();
    let dof = (n - ncoef) as f64;
    let p_values = nw_t.iter().map(|t| student_t_two_sided(*t, dof)).collect();

    let ybar = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let r2 = if k == 0 || sst == 0.0 {
        0.0
    } else {
        1.0 - fit.ssr() / sst
    };

    let mut terms = vec!["alpha".to_string()];
    terms.extend(spec.regressors().iter().map(|s| s.to_string()));
    Ok(RegressionResult {
        spec,
        terms,
        coefficients,
        nw_se,
        nw_t,
        p_values,
        lag,
        nobs: n,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factors(n: usize) -> Vec<FactorObservation> {
        let start = NaiveDate::from_ymd_opt(2025, 4, 1).unwrap();
        (0..n)
            .map(|i| {
                let t = i as f64;
                FactorObservation {
                    date: start + chrono::Days::new(i as u64),
                    mkt_rf: 0.01 * (t * 0.7).sin(),
                    smb: 0.005 * (t * 1.3).cos(),
                    hml: 0.004 * (t * 2.1).sin(),
                    rmw: 0.003 * (t * 0.37).cos(),
                    cma: 0.003 * (t * 3.3).sin(),
                    mom: 0.006 * (t * 0.11 + 1.0).sin(),
                    rf: 0.0001,
                }
            })
            .collect()
    }

    fn series_from(f: &[FactorObservation], excess: Vec<f64>) -> ReturnSeries {
        ReturnSeries {
            dates: f.iter().map(|r| r.date).collect(),
            raw_return: excess.iter().zip(f).map(|(e, r)| e + r.rf).collect(),
            warmup: vec![false; excess.len()],
            excess_return: excess,
        }
    }

    #[test]
    fn alpha_only_constant() {
        let f = factors(158);
        let s = series_from(&f, vec![0.0037; 158]);
        let r = run_spec(&s, &f, RegressionSpec::AlphaOnly, 5).unwrap();
        assert!((r.alpha() * 100.0 - 0.370).abs() < 1e-12);
        assert_eq!(r.nobs, 158);
        assert_eq!(r.r2, 0.0);
    }

    #[test]
    fn pure_factor_portfolio_has_zero_alpha() {
        let f = factors(158);
        let excess: Vec<f64> = f
            .iter()
            .map(|r| {
                0.3 * r.mkt_rf - 0.6 * r.hml + 0.2 * r.smb + 0.1 * r.rmw - 0.2 * r.cma
                    + 0.05 * r.mom
            })
            .collect();
        let r = run_spec(&series_from(&f, excess), &f, RegressionSpec::Ff6, 5).unwrap();
        assert!(r.alpha().abs() < 1e-10);
        assert!((r.coefficient("HML").unwrap() + 0.6).abs() < 1e-9);
        assert!((r.r2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_factor_date() {
        let f = factors(20);
        let s = series_from(&f, vec![0.0; 20]);
        assert!(matches!(
            run_spec(&s, &f[1..], RegressionSpec::Capm, 5),
            Err(FactorModelError::MissingFactorDate(_))
        ));
    }

    #[test]
    fn t_stats_scale_invariant() {
        let f = factors(120);
        let excess: Vec<f64> = f
            .iter()
            .enumerate()
            .map(|(i, r)| 0.001 + 0.5 * r.mkt_rf + 0.002 * ((i * 7919) % 13) as f64 / 13.0)
            .collect();
        let base = run_spec(&series_from(&f, excess.clone()), &f, RegressionSpec::Ff3, 5).unwrap();
        let scaled = run_spec(
            &series_from(&f, excess.iter().map(|v| v * 3.5).collect()),
            &f,
            RegressionSpec::Ff3,
            5,
        )
        .unwrap();
        for (a, b) in base.nw_t.iter().zip(&scaled.nw_t) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}
