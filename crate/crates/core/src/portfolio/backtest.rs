//! Daily formation loop over a joined panel.
//!
//! Formation on date index `t` ranks the signals dated `t` using market caps from the
//! previous trading date; positions are entered at the open of `t` and the first return
//! window runs to the open of `t + 1`. The first date has no prior caps and the last
//! date has no closing open, so formation runs over `1..=n-2`.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{
    cohort_path, overlapping_series, rank_groups, rank_universe, select_bottom_n, select_top_n,
    snapshot_return, turnover, value_weights, CohortPath, PortfolioError, PortfolioSnapshot,
    PortfolioWarning, ReturnMode, ReturnSeries, Tier, TurnoverSeries,
};
use crate::ingest::{Horizon, JoinedPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TierSpec {
    Top(usize),
    Bottom(usize),
    Groups(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestResult {
    pub horizon: Horizon,
    pub holding_days: usize,
    pub tier: Tier,
    pub size: usize,
    pub snapshots: Vec<PortfolioSnapshot>,
    pub returns: ReturnSeries,
    pub turnover: TurnoverSeries,
    pub warnings: Vec<PortfolioWarning>,
}

struct TierState {
    tier: Tier,
    size: usize,
    previous: Option<Vec<String>>,
    snapshots: Vec<PortfolioSnapshot>,
    cohorts: Vec<CohortPath>,
    turnover: TurnoverSeries,
    warnings: Vec<PortfolioWarning>,
}

/// Caps from `t - 1` for stocks that also trade on `t`.
fn formation_caps(panel: &JoinedPanel, t: usize) -> BTreeMap<String, f64> {
    let prev = &panel.market[t - 1];
    panel.market[t]
        .keys()
        .filter_map(|id| prev.get(id).map(|m| (id.clone(), m.market_cap)))
        .collect()
}

pub fn run_backtest(
    panel: &JoinedPanel,
    horizon: Horizon,
    holding_days: usize,
    spec: TierSpec,
) -> Result<Vec<BacktestResult>, PortfolioError> {
    let n = panel.len();
    if n < 3 {
        return Err(PortfolioError::InvalidArgument(
            "a backtest needs at least 3 trading dates".into(),
        ));
    }
    if holding_days == 0 {
        return Err(PortfolioError::InvalidArgument(
            "holding period K must be at least 1".into(),
        ));
    }
    let mut states: Vec<TierState> = match spec {
        TierSpec::Top(size) => vec![(Tier::Top, size)],
        TierSpec::Bottom(size) => vec![(Tier::Bottom, size)],
        TierSpec::Groups(g) => {
            if g == 0 {
                return Err(PortfolioError::InvalidArgument(
                    "group count must be at least 1".into(),
                ));
            }
            (0..g).map(|i| (Tier::RankGroup(i), 0)).collect()
        }
    }
    .into_iter()
    .map(|(tier, size)| TierState {
        tier,
        size,
        previous: None,
        snapshots: Vec::new(),
        cohorts: Vec::new(),
        turnover: TurnoverSeries::default(),
        warnings: Vec::new(),
    })
    .collect();

    for t in 1..n - 1 {
        let caps = formation_caps(panel, t);
        let carry_forward = panel.carry_forward[t];
        let date = panel.dates[t];
        let selections: Vec<Option<Vec<String>>> = if carry_forward {
            states
                .iter()
                .map(|s| {
                    s.previous.as_ref().map(|prev| {
                        prev.iter()
                            .filter(|id| caps.contains_key(*id))
                            .cloned()
                            .collect()
                    })
                })
                .collect()
        } else {
            let scores: BTreeMap<String, f64> = panel.signals[t]
                .iter()
                .filter(|(id, _)| caps.contains_key(*id))
                .map(|(id, f)| (id.clone(), f.attractiveness(horizon)))
                .filter(|(_, v)| v.is_finite())
                .collect();
            if scores.is_empty() {
                vec![None; states.len()]
            } else {
                let ranked = rank_universe(&scores, &caps)?;
                match spec {
                    TierSpec::Top(size) | TierSpec::Bottom(size) => {
                        let sel = if matches!(spec, TierSpec::Top(_)) {
                            select_top_n(&ranked, size)
                        } else {
                            select_bottom_n(&ranked, size)
                        };
                        states[0].warnings.extend(sel.warning);
                        vec![Some(sel.members)]
                    }
                    TierSpec::Groups(g) => rank_groups(&ranked, g)?.into_iter().map(Some).collect(),
                }
            }
        };

        for (state, members) in states.iter_mut().zip(selections) {
            let Some(members) = members.filter(|m| !m.is_empty()) else {
                continue;
            };
            let size = match spec {
                TierSpec::Groups(_) => members.len(),
                _ => state.size,
            };
            let weights = value_weights(&members, &caps)?;
            if let Some(prev) = &state.previous {
                state.turnover.dates.push(date);
                state
                    .turnover
                    .turnover
                    .push(turnover(&members, prev, size, carry_forward));
                state.turnover.carry_forward.push(carry_forward);
            }
            let life = holding_days.min(n - 1 - t);
            let path = cohort_path(&weights, t, life, |day, id| {
                panel.open_to_open(day, id, ReturnMode::Simple)
            });
            state.warnings.extend(path.dropped.iter().map(|(day, id)| {
                PortfolioWarning::DroppedMember {
                    date: Some(panel.dates[*day]),
                    stock_id: id.clone(),
                }
            }));
            state.cohorts.push(path);
            state.snapshots.push(PortfolioSnapshot::new(
                date,
                holding_days,
                state.tier,
                size,
                weights,
                carry_forward,
            )?);
            state.previous = Some(members);
        }
    }

    states
        .into_iter()
        .map(|state| {
            let agg = overlapping_series(&state.cohorts, n, holding_days)?;
            let mut returns = ReturnSeries::default();
            let mut warnings = state.warnings;
            for t in 0..n {
                let Some(r) = agg.values[t] else { continue };
                returns.dates.push(panel.dates[t]);
                returns.raw_return.push(r);
                returns.excess_return.push(r - panel.factors[t].rf);
                returns.warmup.push(agg.warmup[t]);
                if agg.warmup[t] {
                    warnings.push(PortfolioWarning::WarmUp {
                        date: panel.dates[t],
                        live_cohorts: agg.live[t],
                    });
                }
            }
            Ok(BacktestResult {
                horizon,
                holding_days,
                tier: state.tier,
                size: state.size,
                snapshots: state.snapshots,
                returns,
                turnover: state.turnover,
                warnings,
            })
        })
        .collect()
}

/// Value-weighted return of every tradable stock, formed the same way as the portfolios.
pub fn benchmark_series(panel: &JoinedPanel) -> Result<ReturnSeries, PortfolioError> {
    let mut out = ReturnSeries::default();
    for t in 1..panel.len().saturating_sub(1) {
        let caps = formation_caps(panel, t);
        if caps.is_empty() {
            continue;
        }
        let members: Vec<String> = caps.keys().cloned().collect();
        let weights = value_weights(&members, &caps)?;
        let Ok(r) = snapshot_return(&weights, |id| panel.open_to_open(t, id, ReturnMode::Simple))
        else {
            continue;
        };
        out.dates.push(panel.dates[t]);
        out.raw_return.push(r.value);
        out.excess_return.push(r.value - panel.factors[t].rf);
        out.warmup.push(false);
    }
    Ok(out)
}

/// Long `top`, short `bottom` on common dates. Self-financing, so excess equals raw.
pub fn long_short(top: &ReturnSeries, bottom: &ReturnSeries) -> ReturnSeries {
    let short: BTreeMap<_, _> = bottom
        .dates
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i))
        .collect();
    let mut out = ReturnSeries::default();
    for (i, d) in top.dates.iter().enumerate() {
        if let Some(&j) = short.get(d) {
            let r = top.raw_return[i] - bottom.raw_return[j];
            out.dates.push(*d);
            out.raw_return.push(r);
            out.excess_return.push(r);
            out.warmup.push(top.warmup[i] || bottom.warmup[j]);
        }
    }
    out
}
