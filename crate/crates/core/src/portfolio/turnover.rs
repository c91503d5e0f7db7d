use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::PortfolioSnapshot;
use crate::ingest::{Horizon, SignalObservation};

/// `|H_t \ H_{t-1}| / N`; exactly zero on carry-forward dates.
pub fn turnover<S: AsRef<str>>(
    current: &[S],
    previous: &[S],
    n: usize,
    carry_forward: bool,
) -> f64 {
    if carry_forward || n == 0 {
        return 0.0;
    }
    let prev: HashSet<&str> = previous.iter().map(AsRef::as_ref).collect();
    let new = current
        .iter()
        .map(AsRef::as_ref)
        .collect::<HashSet<&str>>()
        .difference(&prev)
        .count();
    (new as f64 / n as f64).min(1.0)
}

/// Share of fresh-signal snapshots that hold `stock`. Carry-forward dates are not counted.
pub fn membership_frequency(snapshots: &[PortfolioSnapshot], stock: &str) -> f64 {
    let valid: Vec<&PortfolioSnapshot> = snapshots.iter().filter(|s| !s.carry_forward).collect();
    if valid.is_empty() {
        return 0.0;
    }
    valid.iter().filter(|s| s.contains(stock)).count() as f64 / valid.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardEntry {
    pub stock_id: String,
    pub mean_score: f64,
    pub dates: usize,
}

/// Per-stock time-series mean of the horizon's score, highest first, ties by id.
pub fn average_score_leaderboard(
    signals: &[SignalObservation],
    horizon: Horizon,
    top_k: usize,
) -> Vec<LeaderboardEntry> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for s in signals {
        let v = s.fields.attractiveness(horizon);
        if v.is_finite() {
            let e = acc.entry(s.stock_id.as_str()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut out: Vec<LeaderboardEntry> = acc
        .into_iter()
        .map(|(id, (sum, n))| LeaderboardEntry {
            stock_id: id.to_string(),
            mean_score: sum / n as f64,
            dates: n,
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_score
            .total_cmp(&a.mean_score)
            .then_with(|| a.stock_id.cmp(&b.stock_id))
    });
    out.truncate(top_k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::Tier;
    use chrono::NaiveDate;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn turnover_cases() {
        let a = ids("A", 20);
        assert_eq!(turnover(&a, &a, 20, false), 0.0);
        assert_eq!(turnover(&a, &ids("B", 20), 20, false), 1.0);
        let mut half = ids("A", 10);
        half.extend(ids("B", 10));
        assert_eq!(turnover(&half, &a, 20, false), 0.5);
        assert_eq!(turnover(&ids("B", 20), &a, 20, true), 0.0);
    }

    fn snap(day: u32, members: &[&str], cf: bool) -> PortfolioSnapshot {
        let w = 1.0 / members.len() as f64;
        let date = NaiveDate::from_ymd_opt(2025, 4, day).unwrap();
        PortfolioSnapshot::new(
            date,
            1,
            Tier::Top,
            members.len(),
            members.iter().map(|m| (m.to_string(), w)).collect(),
            cf,
        )
        .unwrap()
    }

    #[test]
    fn frequency() {
        let s = vec![
            snap(1, &["A"], false),
            snap(2, &["B"], false),
            snap(3, &["A"], false),
            snap(4, &["B"], false),
        ];
        assert_eq!(membership_frequency(&s, "A"), 0.5);
        assert_eq!(membership_frequency(&s, "B"), 0.5);
        assert_eq!(membership_frequency(&s, "C"), 0.0);
        let every = vec![snap(1, &["A"], false), snap(2, &["A"], false)];
        assert_eq!(membership_frequency(&every, "A"), 1.0);
        // Carry-forward dates are excluded from the denominator.
        let cf = vec![
            snap(1, &["A"], false),
            snap(2, &["A"], true),
            snap(3, &["B"], false),
        ];
        assert_eq!(membership_frequency(&cf, "A"), 0.5);
    }
}
