//! Bid-ask spread analytics and cost-versus-alpha accounting.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::MarketObservation;
use crate::portfolio::{PortfolioSnapshot, TurnoverSeries};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("crossed quote: bid {bid} > ask {ask}")]
    CrossedQuote { bid: f64, ask: f64 },
    #[error("non-positive quote")]
    NonPositiveQuote,
    #[error("no member has a spread")]
    AllMembersMissing,
    #[error("total dollar volume is zero")]
    ZeroTotalVolume,
}

/// `(ask - bid) / mid * 1e4`.
pub fn spread_bps(bid: f64, ask: f64) -> Result<f64, CostError> {
    if !(bid > 0.0 && ask > 0.0) {
        return Err(CostError::NonPositiveQuote);
    }
    if ask < bid {
        return Err(CostError::CrossedQuote { bid, ask });
    }
    Ok((ask - bid) / ((ask + bid) / 2.0) * 1e4)
}

/// Portfolio-weighted spread. Members without a spread are dropped and the rest renormalized.
pub fn portfolio_spread(
    snapshot: &PortfolioSnapshot,
    spreads: &BTreeMap<String, f64>,
) -> Result<f64, CostError> {
    let mut acc = 0.0;
    let mut kept = 0.0;
    for (id, w) in &snapshot.members {
        if let Some(s) = spreads.get(id) {
            acc += w * s;
            kept += w;
        }
    }
    if kept == 0.0 {
        return Err(CostError::AllMembersMissing);
    }
    Ok(acc / kept)
}

/// Dollar-volume-weighted spread across the universe on one date.
pub fn market_benchmark_spread<'a, I>(observations: I) -> Result<f64, CostError>
where
    I: IntoIterator<Item = &'a MarketObservation>,
{
    let mut num = 0.0;
    let mut den = 0.0;
    for o in observations {
        if let Some(s) = o.spread_bps {
            if o.dollar_volume > 0.0 {
                num += o.dollar_volume * s;
                den += o.dollar_volume;
            }
        }
    }
    if den == 0.0 {
        return Err(CostError::ZeroTotalVolume);
    }
    Ok(num / den)
}

/// Round-trip cost of replacing a `turnover` fraction at `spread_bps`: half the spread on
/// entry and half on exit, so `turnover * spread`. Returned in basis points.
pub fn cost_drag_bps(turnover: f64, spread_bps: f64) -> f64 {
    2.0 * turnover * (spread_bps / 2.0)
}

/// Same as [`cost_drag_bps`] in decimal return units.
pub fn cost_drag(turnover: f64, spread_bps: f64) -> f64 {
    cost_drag_bps(turnover, spread_bps) / 1e4
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SpreadSeries {
    pub dates: Vec<NaiveDate>,
    pub portfolio_spread_bps: Vec<f64>,
    pub market_spread_bps: Vec<f64>,
    pub turnover: Vec<f64>,
    pub cost_drag_bps: Vec<f64>,
}

impl SpreadSeries {
    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Time-series averages: portfolio spread, market spread, turnover, cost drag.
    pub fn averages(&self) -> Option<[f64; 4]> {
        (!self.dates.is_empty()).then(|| {
            [
                Self::mean(&self.portfolio_spread_bps),
                Self::mean(&self.market_spread_bps),
                Self::mean(&self.turnover),
                Self::mean(&self.cost_drag_bps),
            ]
        })
    }
}

/// Spread and cost series for a snapshot chain. Quotes are taken on the formation date,
/// when positions are entered at the open. The first snapshot has no turnover and is
/// skipped, as are dates where no spread is observable.
pub fn spread_series(
    snapshots: &[PortfolioSnapshot],
    turnover: &TurnoverSeries,
    market_by_date: &BTreeMap<NaiveDate, &BTreeMap<String, MarketObservation>>,
) -> SpreadSeries {
    let turnover_by_date: BTreeMap<NaiveDate, f64> = turnover
        .dates
        .iter()
        .copied()
        .zip(turnover.turnover.iter().copied())
        .collect();
    let mut out = SpreadSeries::default();
    for snap in snapshots {
        let (Some(&to), Some(market)) = (
            turnover_by_date.get(&snap.date),
            market_by_date.get(&snap.date),
        ) else {
            continue;
        };
        let spreads: BTreeMap<String, f64> = market
            .iter()
            .filter_map(|(id, m)| m.spread_bps.map(|s| (id.clone(), s)))
            .collect();
        let (Ok(port), Ok(mkt)) = (
            portfolio_spread(snap, &spreads),
            market_benchmark_spread(market.values()),
        ) else {
            continue;
        };
        out.dates.push(snap.date);
        out.portfolio_spread_bps.push(port);
        out.market_spread_bps.push(mkt);
        out.turnover.push(to);
        out.cost_drag_bps.push(cost_drag_bps(to, port));
    }
    out
}
