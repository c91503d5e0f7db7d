use super::FactorModelError;
use crate::stats::{mean, sample_sd};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// `mean / sd * sqrt(252)` on daily excess returns, sample sd.
pub fn sharpe_annualized(excess: &[f64]) -> Result<f64, FactorModelError> {
    if excess.len() < 2 {
        return Err(FactorModelError::TooFewObservations {
            nobs: excess.len(),
            ncols: 1,
        });
    }
    let sd = sample_sd(excess);
    if !(sd > 0.0) {
        return Err(FactorModelError::ZeroVariance);
    }
    Ok(mean(excess) / sd * TRADING_DAYS_PER_YEAR.sqrt())
}

/// Compounded index: `I_0 = base`, `I_t = I_{t-1} (1 + r_t)`. The output has one more
/// entry than `returns`.
pub fn cumulative_index(returns: &[f64], base: f64) -> Result<Vec<f64>, FactorModelError> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    out.push(base);
    let mut level = base;
    for &r in returns {
        if !(r > -1.0) {
            return Err(FactorModelError::ReturnBelowMinusOne(r));
        }
        level *= 1.0 + r;
        out.push(level);
    }
    Ok(out)
}
