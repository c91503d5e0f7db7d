use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;

use super::{FactorObservation, IngestError, MarketObservation, SignalFields, SignalObservation};
use crate::portfolio::ReturnMode;

/// Per-source coverage against the union of all dates seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub calendar: Vec<NaiveDate>,
    pub missing_signals: Vec<NaiveDate>,
    pub missing_market: Vec<NaiveDate>,
    pub missing_factors: Vec<NaiveDate>,
    /// Trading dates without a fresh signal; the previous portfolio is held.
    pub carry_forward: Vec<NaiveDate>,
}

/// Observations joined on the trading calendar (dates with both market and factor rows).
///
/// A signal dated `t` was produced after the close of `t-1` and is paired with the
/// open-to-open window from `t` to the next trading date.
#[derive(Debug, Clone)]
pub struct JoinedPanel {
    pub dates: Vec<NaiveDate>,
    pub carry_forward: Vec<bool>,
    pub factors: Vec<FactorObservation>,
    pub market: Vec<BTreeMap<String, MarketObservation>>,
    pub signals: Vec<BTreeMap<String, SignalFields>>,
}

impl JoinedPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Open-to-open return of `stock` over the window starting at date index `t`.
    pub fn open_to_open(&self, t: usize, stock: &str, mode: ReturnMode) -> Option<f64> {
        let p0 = self.market.get(t)?.get(stock)?.open_price;
        let p1 = self.market.get(t + 1)?.get(stock)?.open_price;
        crate::portfolio::open_to_open_return(p0, p1, mode).ok()
    }

    /// Every stock id that appears anywhere in the panel, sorted.
    pub fn universe(&self) -> BTreeSet<&str> {
        self.market
            .iter()
            .flat_map(|m| m.keys())
            .chain(self.signals.iter().flat_map(|s| s.keys()))
            .map(String::as_str)
            .collect()
    }
}

fn difference(all: &BTreeSet<NaiveDate>, have: &BTreeSet<NaiveDate>) -> Vec<NaiveDate> {
    all.difference(have).copied().collect()
}

pub fn align_calendar(
    signals: &[SignalObservation],
    market: &[MarketObservation],
    factors: &[FactorObservation],
) -> Result<(JoinedPanel, CoverageReport), IngestError> {
    let sig_dates: BTreeSet<NaiveDate> = signals.iter().map(|s| s.date).collect();
    let mkt_dates: BTreeSet<NaiveDate> = market.iter().map(|m| m.date).collect();
    let fac_dates: BTreeSet<NaiveDate> = factors.iter().map(|f| f.date).collect();
    let all: BTreeSet<NaiveDate> = sig_dates
        .union(&mkt_dates)
        .chain(fac_dates.iter())
        .copied()
        .collect();

    let dates: Vec<NaiveDate> = mkt_dates.intersection(&fac_dates).copied().collect();
    if !dates.iter().any(|d| sig_dates.contains(d)) {
        return Err(IngestError::EmptyIntersection);
    }
    let index: BTreeMap<NaiveDate, usize> =
        dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let mut factor_rows = vec![None; dates.len()];
    for f in factors {
        if let Some(&i) = index.get(&f.date) {
            if factor_rows[i].replace(*f).is_some() {
                return Err(IngestError::DuplicateDate(f.date));
            }
        }
    }
    let mut market_rows: Vec<BTreeMap<String, MarketObservation>> =
        vec![BTreeMap::new(); dates.len()];
    for m in market {
        if let Some(&i) = index.get(&m.date) {
            if market_rows[i]
                .insert(m.stock_id.clone(), m.clone())
                .is_some()
            {
                return Err(IngestError::DuplicateKey {
                    stock_id: m.stock_id.clone(),
                    date: m.date,
                });
            }
        }
    }
    let mut signal_rows: Vec<BTreeMap<String, SignalFields>> = vec![BTreeMap::new(); dates.len()];
    for s in signals {
        if let Some(&i) = index.get(&s.date) {
            if signal_rows[i]
                .insert(s.stock_id.clone(), s.fields.clone())
                .is_some()
            {
                return Err(IngestError::DuplicateKey {
                    stock_id: s.stock_id.clone(),
                    date: s.date,
                });
            }
        }
    }
    let carry_forward: Vec<bool> = signal_rows.iter().map(BTreeMap::is_empty).collect();
    let report = CoverageReport {
        calendar: all.iter().copied().collect(),
        missing_signals: difference(&all, &sig_dates),
        missing_market: difference(&all, &mkt_dates),
        missing_factors: difference(&all, &fac_dates),
        carry_forward: dates
            .iter()
            .zip(&carry_forward)
            .filter(|(_, cf)| **cf)
            .map(|(d, _)| *d)
            .collect(),
    };
    let panel = JoinedPanel {
        dates,
        carry_forward,
        factors: factor_rows
            .into_iter()
            .map(|f| f.expect("date is in the factor set"))
            .collect(),
        market: market_rows,
        signals: signal_rows,
    };
    Ok((panel, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Decision, SignalFields};
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 4, 1).unwrap() + chrono::Days::new(d as u64)
    }

    fn fields() -> SignalFields {
        SignalFields {
            attractiveness: [0.0; 6],
            russell_attractiveness: [0.0; 6],
            sentiment: 0.0,
            divergence: 0.0,
            prob_beat: 0.0,
            decision: Decision::Wait,
            price_targets: [1.0; 7],
            eps_forecasts: [1.0; 5],
            range_flags: vec![],
            source_line: String::new(),
        }
    }

    fn sig(d: u32) -> SignalObservation {
        SignalObservation {
            stock_id: "A".into(),
            date: day(d),
            fields: fields(),
        }
    }

    fn mkt(d: u32) -> MarketObservation {
        MarketObservation::new("A", day(d), 10.0, 1e9, 1e6, None, None).unwrap()
    }

    fn fac(d: u32) -> FactorObservation {
        FactorObservation {
            date: day(d),
            mkt_rf: 0.0,
            smb: 0.0,
            hml: 0.0,
            rmw: 0.0,
            cma: 0.0,
            mom: 0.0,
            rf: 0.0,
        }
    }

    #[test]
    fn identical_dates_no_gaps() {
        let days = [0, 1, 2];
        let (panel, report) =
            align_calendar(&days.map(sig), &days.map(mkt), &days.map(fac)).unwrap();
        assert_eq!(panel.len(), 3);
        assert!(
            report.missing_signals.is_empty()
                && report.missing_market.is_empty()
                && report.missing_factors.is_empty()
        );
        assert!(report.carry_forward.is_empty());
    }

    #[test]
    fn missing_signal_is_carry_forward() {
        let (panel, report) =
            align_calendar(&[sig(0), sig(2)], &[0, 1, 2].map(mkt), &[0, 1, 2].map(fac)).unwrap();
        assert_eq!(panel.carry_forward, vec![false, true, false]);
        assert_eq!(report.carry_forward, vec![day(1)]);
        assert_eq!(report.missing_signals, vec![day(1)]);
    }

    #[test]
    fn empty_intersection() {
        let err = align_calendar(&[sig(5)], &[mkt(0)], &[fac(0)]).unwrap_err();
        assert!(matches!(err, IngestError::EmptyIntersection));
    }

    proptest! {
        #[test]
        fn gap_report_matches_set_difference(
            s in proptest::collection::btree_set(0u32..30, 1..30),
            m in proptest::collection::btree_set(0u32..30, 1..30),
            f in proptest::collection::btree_set(0u32..30, 1..30),
        ) {
            let signals: Vec<_> = s.iter().map(|&d| sig(d)).collect();
            let market: Vec<_> = m.iter().map(|&d| mkt(d)).collect();
            let factors: Vec<_> = f.iter().map(|&d| fac(d)).collect();
            let trading: BTreeSet<u32> = m.intersection(&f).copied().collect();
            let result = align_calendar(&signals, &market, &factors);
            if trading.intersection(&s).next().is_none() {
                prop_assert!(matches!(result, Err(IngestError::EmptyIntersection)));
                return Ok(());
            }
            let (panel, report) = result.unwrap();
            let union: BTreeSet<u32> = s.iter().chain(&m).chain(&f).copied().collect();
            let to_dates = |x: Vec<u32>| x.into_iter().map(day).collect::<Vec<_>>();
            prop_assert_eq!(&report.calendar, &to_dates(union.iter().copied().collect()));
            prop_assert_eq!(&report.missing_signals, &to_dates(union.iter().filter(|d| !s.contains(d)).copied().collect()));
            prop_assert_eq!(&report.missing_market, &to_dates(union.iter().filter(|d| !m.contains(d)).copied().collect()));
            prop_assert_eq!(&report.missing_factors, &to_dates(union.iter().filter(|d| !f.contains(d)).copied().collect()));
            prop_assert_eq!(&report.carry_forward, &to_dates(trading.iter().filter(|d| !s.contains(d)).copied().collect()));
            prop_assert_eq!(panel.dates, to_dates(trading.into_iter().collect()));
        }
    }
}
