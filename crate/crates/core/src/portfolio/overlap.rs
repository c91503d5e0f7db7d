//! Overlapping K-day portfolios: K staggered buy-and-hold cohorts, each weighted 1/K.

use super::{snapshot_return, PortfolioError};

/// Daily returns of one buy-and-hold cohort, starting at day index `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortPath {
    pub start: usize,
    pub returns: Vec<f64>,
    /// (day index, stock) for members dropped because their return was missing.
    pub dropped: Vec<(usize, String)>,
}

/// Follows a cohort for up to `life` days. Weights drift with realized returns,
/// `w_{i,t+1} ∝ w_{i,t}(1 + r_{i,t})`. The path stops early if every member is missing.
pub fn cohort_path<F>(
    weights: &[(String, f64)],
    start: usize,
    life: usize,
    mut stock_return: F,
) -> CohortPath
where
    F: FnMut(usize, &str) -> Option<f64>,
{
    let mut w = weights.to_vec();
    let mut path = CohortPath {
        start,
        returns: Vec::with_capacity(life),
        dropped: Vec::new(),
    };
    for j in 0..life {
        let t = start + j;
        let rets: Vec<Option<f64>> = w.iter().map(|(id, _)| stock_return(t, id)).collect();
        let mut k = 0;
        let day = match snapshot_return(&w, |_| {
            k += 1;
            rets[k - 1]
        }) {
            Ok(d) => d,
            Err(_) => break,
        };
        path.returns.push(day.value);
        if j + 1 == life {
            break;
        }
        let mut next: Vec<(String, f64)> = Vec::with_capacity(w.len());
        for ((id, wi), r) in w.into_iter().zip(&rets) {
            match r {
                Some(r) => next.push((id, wi * (1.0 + r))),
                None => path.dropped.push((t, id)),
            }
        }
        let total: f64 = next.iter().map(|(_, x)| x).sum();
        if !(total > 0.0) {
            break;
        }
        for (_, x) in next.iter_mut() {
            *x /= total;
        }
        w = next;
    }
    path
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSeries {
    /// Mean return over live cohorts; `None` when no cohort is live.
    pub values: Vec<Option<f64>>,
    pub live: Vec<usize>,
    /// Fewer than K cohorts live (start of the sample or after gaps).
    pub warmup: Vec<bool>,
}

/// Aggregates cohorts into a daily series over `n_days`. With `k = 1` each day is exactly
/// the single live cohort's return.
pub fn overlapping_series(
    cohorts: &[CohortPath],
    n_days: usize,
    k: usize,
) -> Result<OverlapSeries, PortfolioError> {
    if k == 0 {
        return Err(PortfolioError::InvalidArgument(
            "holding period K must be at least 1".into(),
        ));
    }
    let mut sorted: Vec<&CohortPath> = cohorts.iter().collect();
    sorted.sort_by_key(|c| c.start);
    let mut out = OverlapSeries {
        values: vec![None; n_days],
        live: vec![0; n_days],
        warmup: vec![true; n_days],
    };
    for t in 0..n_days {
        let live: Vec<f64> = sorted
            .iter()
            .filter(|c| c.start <= t && t - c.start < k)
            .filter_map(|c| c.returns.get(t - c.start).copied())
            .collect();
        out.live[t] = live.len();
        out.warmup[t] = live.len() < k;
        if let Some(sum) = live.iter().copied().reduce(|a, b| a + b) {
            out.values[t] = Some(sum / live.len() as f64);
        }
    }
    Ok(out)
}
