//! Kolmogorov-Smirnov tests with asymptotic p-values.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use super::{ConsistencyError, RepeatedQueryPanel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small lambda.
        let y = -PI * PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..=30 {
            let m = (2 * k - 1) as f64;
            cdf += (m * m * y).exp();
        }
        (1.0 - (2.0 * PI).sqrt() / lambda * cdf).clamp(0.0, 1.0)
    } else {
        let mut sf = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sf += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * sf).clamp(0.0, 1.0)
    }
}

fn sorted(x: &[f64]) -> Result<Vec<f64>, ConsistencyError> {
    if x.is_empty() {
        return Err(ConsistencyError::EmptySample);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ConsistencyError::NonFinite);
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Two-sample test; `p` uses `lambda = sqrt(n_a n_b / (n_a + n_b)) * D`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, ConsistencyError> {
    let (sa, sb) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let v = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] == v {
            i += 1;
        }
        while j < sb.len() && sb[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsResult {
        d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
    })
}

/// One-sample test against the uniform distribution on [0, 1].
pub fn ks_uniform(x: &[f64]) -> Result<KsResult, ConsistencyError> {
    let s = sorted(x)?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in s.iter().enumerate() {
        let f = u.clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        d,
        p_value: kolmogorov_sf(n.sqrt() * d),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsStockResult {
    pub stock_id: String,
    pub n: usize,
    pub result: KsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsBattery {
    pub per_stock: Vec<KsStockResult>,
    pub rejected: usize,
    pub total: usize,
    pub rejection_rate: f64,
    pub level: f64,
}

/// Each stock's pooled scores against the pool of every other stock.
pub fn ks_battery(panel: &RepeatedQueryPanel, level: f64) -> Result<KsBattery, ConsistencyError> {
    let by_stock = panel.scores_by_stock();
    if by_stock.len() < 2 {
        return Err(ConsistencyError::EmptySample);
    }
    let stocks: Vec<(&String, &Vec<f64>)> = by_stock.iter().collect();
    let per_stock: Vec<KsStockResult> = stocks
        .par_iter()
        .map(|(id, own)| {
            let rest: Vec<f64> = stocks
                .iter()
                .filter(|(other, _)| other != id)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            ks_two_sample(own, &rest).map(|result| KsStockResult {
                stock_id: (*id).clone(),
                n: own.len(),
                result,
            })
        })
        .collect::<Result<_, _>>()?;
    let rejected = per_stock
        .iter()
        .filter(|r| r.result.p_value < level)
        .count();
    let total = per_stock.len();
    Ok(KsBattery {
        per_stock,
        rejected,
        total,
        rejection_rate: rejected as f64 / total as f64,
        level,
    })
}
