//! Columnar view over joined (stock, date) cells with descriptive statistics.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::consistency::pearson;
use crate::ingest::{Horizon, JoinedPanel};
use crate::portfolio::ReturnMode;
use crate::stats::{stars, student_t_two_sided};

#[derive(Debug, Error, PartialEq)]
pub enum PanelError {
    #[error("need at least 2 columns")]
    TooFewColumns,
    #[error("columns `{a}` and `{b}` overlap on {n} rows, need at least 3")]
    InsufficientOverlap { a: String, b: String, n: usize },
    #[error("column `{a}` or `{b}` is constant over their overlap")]
    ZeroVariance { a: String, b: String },
    #[error("column `{name}` has {found} rows, panel has {expected}")]
    LengthMismatch {
        name: String,
        found: usize,
        expected: usize,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelColumn {
    pub name: String,
    pub units: String,
    /// One entry per panel row; `None` is missing.
    pub values: Vec<Option<f64>>,
}

impl PanelColumn {
    pub fn new(
        name: impl Into<String>,
        units: impl Into<String>,
        values: Vec<Option<f64>>,
    ) -> Self {
        Self {
            name: name.into(),
            units: units.into(),
            values,
        }
    }

    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

/// Statistics over non-missing values. A column with no values has count 0 and NaN elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub count: usize,
    pub min: f64,
    pub p1: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    pub skew: f64,
}

/// Linear interpolation between order statistics at `h = (n - 1) q`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summary_stats(column: &PanelColumn) -> SummaryRow {
    let mut x: Vec<f64> = column.present().collect();
    let n = x.len();
    if n == 0 {
        let nan = f64::NAN;
        return SummaryRow {
            count: 0,
            min: nan,
            p1: nan,
            p25: nan,
            median: nan,
            p75: nan,
            p99: nan,
            max: nan,
            mean: nan,
            sd: nan,
            skew: nan,
        };
    }
    x.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let (m2, m3) = x.iter().fold((0.0, 0.0), |(a, b), v| {
        let d = v - mean;
        (a + d * d, b + d * d * d)
    });
    let sd = if n > 1 {
        (m2 / (nf - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    // Adjusted Fisher-Pearson G1; constant columns report 0.
    let skew = if m2 == 0.0 {
        0.0
    } else if n < 3 {
        f64::NAN
    } else {
        let g1 = (m3 / nf) / (m2 / nf).powf(1.5);
        g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
    };
    SummaryRow {
        count: n,
        min: x[0],
        p1: percentile_sorted(&x, 0.01),
        p25: percentile_sorted(&x, 0.25),
        median: percentile_sorted(&x, 0.5),
        p75: percentile_sorted(&x, 0.75),
        p99: percentile_sorted(&x, 0.99),
        max: x[n - 1],
        mean,
        sd,
        skew,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrCell {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

impl CorrCell {
    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// Full square matrix, symmetric.
    pub cells: Vec<Vec<CorrCell>>,
}

/// `t = rho sqrt((n-2)/(1-rho^2))` against Student-t(n-2).
pub fn correlation_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let dof = n as f64 - 2.0;
    student_t_two_sided(rho * (dof / (1.0 - rho * rho)).sqrt(), dof)
}

/// Pairwise-complete Pearson matrix.
pub fn correlation_matrix(columns: &[&PanelColumn]) -> Result<CorrelationMatrix, PanelError> {
    if columns.len() < 2 {
        return Err(PanelError::TooFewColumns);
    }
    let k = columns.len();
    let rows = columns[0].values.len();
    if let Some(c) = columns.iter().find(|c| c.values.len() != rows) {
        return Err(PanelError::LengthMismatch {
            name: c.name.clone(),
            found: c.values.len(),
            expected: rows,
        });
    }
    let unit = CorrCell {
        rho: 1.0,
        p_value: 0.0,
        n: 0,
    };
    let mut cells = vec![vec![unit; k]; k];
    for i in 0..k {
        cells[i][i].n = columns[i].values.iter().flatten().count();
        for j in 0..i {
            let (x, y): (Vec<f64>, Vec<f64>) = columns[i]
                .values
                .iter()
                .zip(&columns[j].values)
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            let (a, b) = (columns[i].name.clone(), columns[j].name.clone());
            if x.len() < 3 {
                return Err(PanelError::InsufficientOverlap { a, b, n: x.len() });
            }
            let rho = pearson(&x, &y).map_err(|_| PanelError::ZeroVariance { a, b })?;
            let cell = CorrCell {
                rho,
                p_value: correlation_p_value(rho, x.len()),
                n: x.len(),
            };
            cells[i][j] = cell;
            cells[j][i] = cell;
        }
    }
    Ok(CorrelationMatrix {
        names: columns.iter().map(|c| c.name.clone()).collect(),
        cells,
    })
}

/// Rows are (stock, date) cells seen in the market or signal panel on a trading date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Panel {
    pub rows: Vec<(String, NaiveDate)>,
    pub columns: Vec<PanelColumn>,
}

/// Default correlation subset with display labels.
pub const CORRELATION_SUBSET: [(&str, &str); 11] = [
    ("attractiveness_1d", "Attr (1D)"),
    ("attractiveness_1w", "Attr (1W)"),
    ("attractiveness_1m", "Attr (1M)"),
    ("attractiveness_russell_1d", "Russell Attr (1D)"),
    ("market_sentiment", "Sentiment"),
    ("market_divergence", "Divergence"),
    ("prob_beat", "Prob Beat (1Q)"),
    ("market_cap", "Market Cap"),
    ("dollar_volume", "Dollar Vol"),
    ("spread_bps", "Spread"),
    ("open_to_open_return", "Ret (Open-Open)"),
];

impl Panel {
    /// One row per (date, stock) seen in signals or market data. `mode` sets the units of
    /// the per-stock return column; portfolios always aggregate simple returns.
    pub fn from_joined(joined: &JoinedPanel, mode: ReturnMode) -> Self {
        let mut rows = Vec::new();
        let mut index = Vec::new();
        for t in 0..joined.len() {
            let ids: BTreeSet<&String> = joined.market[t]
                .keys()
                .chain(joined.signals[t].keys())
                .collect();
            for id in ids {
                rows.push((id.clone(), joined.dates[t]));
                index.push((t, id));
            }
        }
        let sig = |f: &dyn Fn(&crate::ingest::SignalFields) -> f64| -> Vec<Option<f64>> {
            index
                .iter()
                .map(|(t, id)| joined.signals[*t].get(*id).map(f))
                .collect()
        };
        let mut columns = Vec::new();
        for h in Horizon::ALL {
            columns.push(PanelColumn::new(
                format!("attractiveness_{h}"),
                "score",
                sig(&|s| s.attractiveness(h)),
            ));
        }
        for h in Horizon::ALL {
            columns.push(PanelColumn::new(
                format!("attractiveness_russell_{h}"),
                "score",
                sig(&|s| s.russell_attractiveness[h.index()]),
            ));
        }
        columns.push(PanelColumn::new(
            "market_sentiment",
            "score",
            sig(&|s| s.sentiment),
        ));
        columns.push(PanelColumn::new(
            "market_divergence",
            "score",
            sig(&|s| s.divergence),
        ));
        columns.push(PanelColumn::new(
            "prob_beat",
            "score",
            sig(&|s| s.prob_beat),
        ));
        let mkt =
            |f: &dyn Fn(&crate::ingest::MarketObservation) -> Option<f64>| -> Vec<Option<f64>> {
                index
                    .iter()
                    .map(|(t, id)| joined.market[*t].get(*id).and_then(f))
                    .collect()
            };
        columns.push(PanelColumn::new(
            "market_cap",
            "usd",
            mkt(&|m| Some(m.market_cap)),
        ));
        columns.push(PanelColumn::new(
            "dollar_volume",
            "usd",
            mkt(&|m| Some(m.dollar_volume)),
        ));
        columns.push(PanelColumn::new(
            "spread_bps",
            "bps",
            mkt(&|m| m.spread_bps),
        ));
        columns.push(PanelColumn::new(
            "open_to_open_return",
            match mode {
                ReturnMode::Simple => "decimal",
                ReturnMode::Log => "log",
            },
            index
                .iter()
                .map(|(t, id)| joined.open_to_open(*t, id, mode))
                .collect(),
        ));
        Self { rows, columns }
    }

    pub fn column(&self, name: &str) -> Result<&PanelColumn, PanelError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| PanelError::UnknownColumn(name.to_string()))
    }

    pub fn summary(&self) -> Vec<(&PanelColumn, SummaryRow)> {
        self.columns.iter().map(|c| (c, summary_stats(c))).collect()
    }

    pub fn correlations(&self, names: &[&str]) -> Result<CorrelationMatrix, PanelError> {
        let cols = names
            .iter()
            .map(|n| self.column(n))
            .collect::<Result<Vec<_>, _>>()?;
        correlation_matrix(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> PanelColumn {
        PanelColumn::new("x", "", v.iter().map(|x| Some(*x)).collect())
    }

    #[test]
    fn symmetric_set() {
        let s = summary_stats(&col(&[1.0, 2.0, 3.0]));
        assert_eq!(
            (s.count, s.mean, s.median, s.sd, s.skew),
            (3, 2.0, 2.0, 1.0, 0.0)
        );
        assert_eq!((s.min, s.max), (1.0, 3.0));
        assert!((s.p25 - 1.5).abs() < 1e-15);
    }

    #[test]
    fn constant_and_empty() {
        let s = summary_stats(&col(&[4.0; 5]));
        assert_eq!((s.sd, s.skew), (0.0, 0.0));
        let e = summary_stats(&PanelColumn::new("e", "", vec![None, None]));
        assert_eq!(e.count, 0);
        assert!(e.mean.is_nan());
    }

    #[test]
    fn skew_reference() {
        // {1, 2, 3, 10}: m2 = 50, m3 = 180, g1 = 45 / 12.5^1.5, G1 = g1 sqrt(12) / 2.
        let s = summary_stats(&col(&[1.0, 2.0, 3.0, 10.0]));
        assert!((s.skew - 1.763_632_614_803_888).abs() < 1e-12, "{}", s.skew);
    }

    #[test]
    fn missing_only_changes_count() {
        let a = summary_stats(&col(&[0.3, -1.0, 2.5, 0.7]));
        let mut c = col(&[0.3, -1.0, 2.5, 0.7]);
        c.values.insert(2, None);
        let b = summary_stats(&c);
        assert_eq!(a, b);
    }

    #[test]
    fn correlation_identities() {
        let x = col(&[1.0, 4.0, 2.0, 8.0, 5.0]);
        let mut y = col(&[-1.0, -4.0, -2.0, -8.0, -5.0]);
        y.name = "y".into();
        let m = correlation_matrix(&[&x, &y]).unwrap();
        assert_eq!(m.cells[0][0].rho, 1.0);
        assert_eq!(m.cells[1][0].rho, -1.0);
        assert_eq!(m.cells[0][1], m.cells[1][0]);
        let short = PanelColumn::new("s", "", vec![Some(1.0), Some(2.0), None, None, None]);
        assert!(matches!(
            correlation_matrix(&[&x, &short]),
            Err(PanelError::InsufficientOverlap { n: 2, .. })
        ));
    }

    #[test]
    fn p_value_reference() {
        // rho 0.5, n 12: t = 0.5 sqrt(10/0.75) = 1.8257, p about 0.0979.
        let p = correlation_p_value(0.5, 12);
        assert!((p - 0.0979).abs() < 5e-4, "{p}");
    }

    proptest! {
        #[test]
        fn summary_is_permutation_invariant(mut v in prop::collection::vec(-100.0f64..100.0, 1..40), seed in 0u64..1000) {
            let a = summary_stats(&col(&v));
            let k = (seed as usize) % v.len();
            v.rotate_left(k);
            v.reverse();
            let b = summary_stats(&col(&v));
            prop_assert!(a.min == b.min && a.max == b.max && a.median == b.median && a.p1 == b.p1 && a.p99 == b.p99);
            prop_assert!((a.mean - b.mean).abs() < 1e-9);
            prop_assert!(a.min <= a.p1 && a.p1 <= a.p25 && a.p25 <= a.median && a.median <= a.p75 && a.p75 <= a.p99 && a.p99 <= a.max);
        }

        #[test]
        fn matrix_is_symmetric(data in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 5..40)) {
            let cols: Vec<PanelColumn> = (0..3).map(|j| PanelColumn::new(format!("c{j}"), "", data.iter().map(|r| Some([r.0, r.1, r.2][j])).collect())).collect();
            let refs: Vec<&PanelColumn> = cols.iter().collect();
            let m = correlation_matrix(&refs).unwrap();
            for i in 0..3 {
                prop_assert_eq!(m.cells[i][i].rho, 1.0);
                for j in 0..3 {
                    prop_assert_eq!(m.cells[i][j], m.cells[j][i]);
                    prop_assert!(m.cells[i][j].rho.abs() <= 1.0);
                }
            }
        }
    }
}
