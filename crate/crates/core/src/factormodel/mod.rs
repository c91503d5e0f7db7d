//! Time-series factor regressions with Newey-West inference.

mod hac;
mod ols;
mod perf;
mod spec;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hac::{nw_cov, nw_cov_with_bread};
pub use ols::{design_matrix, ols_fit, OlsFit};
pub use perf::{cumulative_index, sharpe_annualized, TRADING_DAYS_PER_YEAR};
pub use spec::{run_spec, RegressionResult};

/// Default Newey-West lag.
pub const DEFAULT_NW_LAG: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegressionSpec {
    AlphaOnly,
    Capm,
    Ff3,
    Ff5,
    Ff6,
}

pub const FACTOR_NAMES: [&str; 6] = ["MKT", "SMB", "HML", "RMW", "CMA", "MOM"];

impl RegressionSpec {
    pub const ALL: [RegressionSpec; 5] = [
        RegressionSpec::AlphaOnly,
        RegressionSpec::Capm,
        RegressionSpec::Ff3,
        RegressionSpec::Ff5,
        RegressionSpec::Ff6,
    ];

    /// Number of leading factors (in MKT, SMB, HML, RMW, CMA, MOM order) used.
    pub fn factor_count(self) -> usize {
        match self {
            RegressionSpec::AlphaOnly => 0,
            RegressionSpec::Capm => 1,
            RegressionSpec::Ff3 => 3,
            RegressionSpec::Ff5 => 5,
            RegressionSpec::Ff6 => 6,
        }
    }

    pub fn regressors(self) -> &'static [&'static str] {
        &FACTOR_NAMES[..self.factor_count()]
    }

    pub fn label(self) -> &'static str {
        match self {
            RegressionSpec::AlphaOnly => "ALPHA_ONLY",
            RegressionSpec::Capm => "CAPM",
            RegressionSpec::Ff3 => "FF3",
            RegressionSpec::Ff5 => "FF5",
            RegressionSpec::Ff6 => "FF6",
        }
    }
}

impl fmt::Display for RegressionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RegressionSpec {
    type Err = FactorModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" | "alpha_only" => Ok(RegressionSpec::AlphaOnly),
            "capm" => Ok(RegressionSpec::Capm),
            "ff3" => Ok(RegressionSpec::Ff3),
            "ff5" => Ok(RegressionSpec::Ff5),
            "ff6" => Ok(RegressionSpec::Ff6),
            other => Err(FactorModelError::InvalidArgument(format!(
                "unknown regression spec `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FactorModelError {
    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("too few observations: {nobs} for {ncols} coefficients")]
    TooFewObservations { nobs: usize, ncols: usize },
    #[error("lag {lag} too large for {nobs} observations")]
    LagTooLarge { lag: usize, nobs: usize },
    #[error("no factor row for {0}")]
    MissingFactorDate(NaiveDate),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("return {0} is at or below -100%")]
    ReturnBelowMinusOne(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
