//! CSV renderings of every report table.

use std::collections::BTreeMap;

use crate::consistency::ConsistencyReport;
use crate::costs::SpreadSeries;
use crate::factormodel::{cumulative_index, FactorModelError, RegressionResult};
use crate::ingest::{CoverageReport, FactorUnits, Horizon};
use crate::panel::{CorrelationMatrix, Panel};
use crate::portfolio::{LeaderboardEntry, PortfolioSnapshot, ReturnSeries, Tier, TurnoverSeries};
use crate::stats::stars;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// `# seed=<seed>` line, then RFC 4180 CSV.
    pub fn render(&self, seed: u64) -> Vec<u8> {
        let mut out = format!("# seed={seed}\n").into_bytes();
        {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(&mut out);
            w.write_record(&self.header).expect("in-memory write");
            for r in &self.rows {
                w.write_record(r).expect("in-memory write");
            }
            w.flush().expect("in-memory flush");
        }
        out
    }
}

/// Shortest round-trip decimal; NaN renders empty.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn summary_table(panel: &Panel) -> Table {
    let mut t = Table::new(
        "summary",
        &[
            "variable", "units", "count", "min", "p1", "p25", "median", "p75", "p99", "max",
            "mean", "sd", "skew",
        ],
    );
    for (col, s) in panel.summary() {
        let mut row = vec![col.name.clone(), col.units.clone(), s.count.to_string()];
        row.extend(
            [
                s.min, s.p1, s.p25, s.median, s.p75, s.p99, s.max, s.mean, s.sd, s.skew,
            ]
            .map(num),
        );
        t.push(row);
    }
    t
}

/// Lower triangle including the diagonal, one row per pair.
pub fn corr_table(m: &CorrelationMatrix, labels: &[&str]) -> Table {
    let mut t = Table::new(
        "corr",
        &[
            "row",
            "col",
            "row_label",
            "col_label",
            "rho",
            "p_value",
            "stars",
            "n",
        ],
    );
    for i in 0..m.names.len() {
        for j in 0..=i {
            let c = m.cells[i][j];
            let label = |k: usize| {
                labels
                    .get(k)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| m.names[k].clone())
            };
            t.push(vec![
                format!("({})", i + 1),
                format!("({})", j + 1),
                label(i),
                label(j),
                num(c.rho),
                num(c.p_value),
                if i == j {
                    String::new()
                } else {
                    c.stars().to_string()
                },
                c.n.to_string(),
            ]);
        }
    }
    t
}

pub fn snapshots_table<'a>(
    entries: impl IntoIterator<Item = (Horizon, &'a [PortfolioSnapshot])>,
) -> Table {
    let mut t = Table::new(
        "snapshots",
        &["date", "horizon", "tier", "stock_id", "weight"],
    );
    for (h, snaps) in entries {
        for s in snaps {
            for (id, w) in &s.members {
                t.push(vec![
                    s.date.to_string(),
                    h.to_string(),
                    s.tier.to_string(),
                    id.clone(),
                    num(*w),
                ]);
            }
        }
    }
    t
}

pub fn returns_table<'a>(
    entries: impl IntoIterator<Item = (Horizon, Tier, &'a ReturnSeries)>,
) -> Table {
    let mut t = Table::new(
        "returns",
        &[
            "date",
            "horizon",
            "tier",
            "raw_return",
            "excess_return",
            "warmup",
        ],
    );
    for (h, tier, s) in entries {
        for i in 0..s.len() {
            t.push(vec![
                s.dates[i].to_string(),
                h.to_string(),
                tier.to_string(),
                num(s.raw_return[i]),
                num(s.excess_return[i]),
                u8::from(s.warmup[i]).to_string(),
            ]);
        }
    }
    t
}

pub fn turnover_table<'a>(
    entries: impl IntoIterator<Item = (Horizon, Tier, &'a TurnoverSeries)>,
) -> Table {
    let mut t = Table::new(
        "turnover",
        &["date", "horizon", "tier", "turnover", "carry_forward"],
    );
    for (h, tier, s) in entries {
        for i in 0..s.dates.len() {
            t.push(vec![
                s.dates[i].to_string(),
                h.to_string(),
                tier.to_string(),
                num(s.turnover[i]),
                u8::from(s.carry_forward[i]).to_string(),
            ]);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionEntry {
    pub horizon: Horizon,
    pub tier: Tier,
    pub result: RegressionResult,
    pub sharpe: Option<f64>,
}

/// Alpha in `units` per day, unitless betas; t-statistics in a
/// parenthesised display column; Sharpe and Obs footer rows per regression.
pub fn regress_table(entries: &[RegressionEntry], units: FactorUnits) -> Table {
    let mut t = Table::new(
        "regress",
        &[
            "horizon",
            "tier",
            "spec",
            "row",
            "estimate",
            "nw_se",
            "nw_t",
            "p_value",
            "stars",
            "display",
            "t_display",
        ],
    );
    for e in entries {
        let r = &e.result;
        let base = || {
            vec![
                e.horizon.to_string(),
                e.tier.to_string(),
                r.spec.label().to_string(),
            ]
        };
        for (i, term) in r.terms.iter().enumerate() {
            let scale = if i == 0 { units.scale() } else { 1.0 };
            let (b, se) = (r.coefficients[i] * scale, r.nw_se[i] * scale);
            let mut row = base();
            row.extend([
                term.clone(),
                num(b),
                num(se),
                num(r.nw_t[i]),
                num(r.p_values[i]),
                r.stars(i).to_string(),
                format!("{b:.3}{}", r.stars(i)),
                format!("({:.2})", r.nw_t[i]),
            ]);
            t.push(row);
        }
        let footer = |name: &str, v: String, display: String| {
            let mut row = base();
            row.extend([
                name.to_string(),
                v,
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                display,
                String::new(),
            ]);
            row
        };
        t.push(footer("R2", num(r.r2), format!("{:.3}", r.r2)));
        if let Some(s) = e.sharpe {
            t.push(footer("Sharpe", num(s), format!("{s:.2}")));
        }
        t.push(footer("Obs", r.nobs.to_string(), r.nobs.to_string()));
    }
    t
}

pub fn group_alpha_table(entries: &[(Tier, &RegressionResult, Option<f64>)]) -> Table {
    let mut t = Table::new(
        "group_alphas",
        &[
            "group",
            "spec",
            "alpha_pct",
            "nw_t",
            "p_value",
            "stars",
            "mean_turnover",
            "nobs",
        ],
    );
    for (tier, r, to) in entries {
        t.push(vec![
            tier.to_string(),
            r.spec.label().to_string(),
            num(r.alpha() * 100.0),
            num(r.alpha_t()),
            num(r.p_values[0]),
            stars(r.p_values[0]).to_string(),
            to.map(num).unwrap_or_default(),
            r.nobs.to_string(),
        ]);
    }
    t
}

/// Daily rows plus an `average` footer row.
pub fn costs_table(s: &SpreadSeries) -> Table {
    let mut t = Table::new(
        "costs",
        &[
            "date",
            "portfolio_spread_bps",
            "market_spread_bps",
            "turnover",
            "cost_drag_bps",
        ],
    );
    for i in 0..s.dates.len() {
        t.push(vec![
            s.dates[i].to_string(),
            num(s.portfolio_spread_bps[i]),
            num(s.market_spread_bps[i]),
            num(s.turnover[i]),
            num(s.cost_drag_bps[i]),
        ]);
    }
    if let Some(avg) = s.averages() {
        let mut row = vec!["average".to_string()];
        row.extend(avg.map(num));
        t.push(row);
    }
    t
}

pub fn consistency_table(r: &ConsistencyReport) -> Table {
    let mut t = Table::new("consistency", &["test", "statistic", "value", "detail"]);
    t.push(vec![
        "ks_distribution".into(),
        "rejection_rate".into(),
        num(r.ks.rejection_rate),
        format!(
            "{}/{} rejected at {}",
            r.ks.rejected, r.ks.total, r.ks.level
        ),
    ]);
    t.push(vec![
        "permutation_variance".into(),
        "p_value".into(),
        num(r.permutation.p_value),
        format!(
            "within_variance={} n_perm={} groups={} seed={}",
            num(r.permutation.statistic),
            r.permutation.n_perm,
            r.permutation.groups,
            r.permutation_seed
        ),
    ]);
    t.push(vec![
        "split_half".into(),
        "pearson".into(),
        num(r.split_half.rho),
        format!("cells={} seed={}", r.split_half.cells, r.split_half_seed),
    ]);
    t.push(vec![
        "rank_stability".into(),
        "spearman".into(),
        num(r.rank_stability.rho),
        format!(
            "evaluations={} repetitions={} seed={}",
            r.rank_stability.evaluations, r.rank_stability.repetitions, r.rank_stability_seed
        ),
    ]);
    if let Some(a) = &r.alignment {
        t.push(vec![
            "production_alignment".into(),
            "spearman".into(),
            num(a.rho),
            format!("overlap={}", a.overlap),
        ]);
    }
    t
}

/// Index level after each date's return window, base 100 before the first.
pub fn cumulative_table<'a>(
    entries: impl IntoIterator<Item = (Horizon, Tier, &'a ReturnSeries)>,
) -> Result<Table, FactorModelError> {
    let mut t = Table::new("cumulative", &["date", "horizon", "tier", "index"]);
    for (h, tier, s) in entries {
        let idx = cumulative_index(&s.raw_return, 100.0)?;
        for (d, v) in s.dates.iter().zip(&idx[1..]) {
            t.push(vec![
                d.to_string(),
                h.to_string(),
                tier.to_string(),
                num(*v),
            ]);
        }
    }
    Ok(t)
}

pub fn leaderboard_table(horizon: Horizon, entries: &[LeaderboardEntry]) -> Table {
    let mut t = Table::new(
        "leaderboard",
        &["rank", "horizon", "stock_id", "mean_score", "dates"],
    );
    for (i, e) in entries.iter().enumerate() {
        t.push(vec![
            (i + 1).to_string(),
            horizon.to_string(),
            e.stock_id.clone(),
            num(e.mean_score),
            e.dates.to_string(),
        ]);
    }
    t
}

/// Highest frequency first, ties by id.
pub fn frequency_table(horizon: Horizon, tier: Tier, freq: &BTreeMap<String, f64>) -> Table {
    let mut rows: Vec<(&String, f64)> = freq.iter().map(|(k, v)| (k, *v)).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut t = Table::new("frequency", &["horizon", "tier", "stock_id", "frequency"]);
    for (id, f) in rows {
        t.push(vec![
            horizon.to_string(),
            tier.to_string(),
            id.clone(),
            num(f),
        ]);
    }
    t
}

/// One row per calendar date; flags are 1 when the source is present.
pub fn coverage_table(c: &CoverageReport) -> Table {
    let mut t = Table::new(
        "coverage",
        &["date", "signals", "market", "factors", "carry_forward"],
    );
    let flag = |v: &[chrono::NaiveDate], d| u8::from(!v.contains(d)).to_string();
    for d in &c.calendar {
        t.push(vec![
            d.to_string(),
            flag(&c.missing_signals, d),
            flag(&c.missing_market, d),
            flag(&c.missing_factors, d),
            u8::from(c.carry_forward.contains(d)).to_string(),
        ]);
    }
    t
}

pub fn warnings_table(entries: &[(String, String)]) -> Table {
    let mut t = Table::new("warnings", &["stage", "message"]);
    for (stage, msg) in entries {
        t.push(vec![stage.clone(), msg.clone()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_has_seed_line_and_quotes() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), "has,comma".into()]);
        let s = String::from_utf8(t.render(9)).unwrap();
        assert_eq!(s, "# seed=9\na,b\n1,\"has,comma\"\n");
    }

    #[test]
    fn num_format() {
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(f64::NAN), "");
        assert_eq!(num(1e-7), "0.0000001");
    }
}
