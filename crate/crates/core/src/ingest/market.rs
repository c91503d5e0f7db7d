use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{check_header, parse_date, parse_f64, IngestError};
use crate::costs::spread_bps;

const MARKET_COLUMNS: [&str; 7] = [
    "date",
    "stock_id",
    "open",
    "market_cap",
    "dollar_volume",
    "bid",
    "ask",
];

/// One stock-day of market data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketObservation {
    pub stock_id: String,
    pub date: NaiveDate,
    pub open_price: f64,
    pub market_cap: f64,
    pub dollar_volume: f64,
    pub bid: Option<f64>,
    pub ask: Option<f64>,
    /// Derived from bid/ask when both are present.
    pub spread_bps: Option<f64>,
}

impl MarketObservation {
    /// Validates the row and derives the spread.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        stock_id: impl Into<String>,
        date: NaiveDate,
        open_price: f64,
        market_cap: f64,
        dollar_volume: f64,
        bid: Option<f64>,
        ask: Option<f64>,
    ) -> Result<Self, IngestError> {
        let stock_id = stock_id.into();
        if !(open_price > 0.0 && open_price.is_finite()) {
            return Err(IngestError::NonPositivePrice { stock_id, date });
        }
        if !(market_cap > 0.0 && market_cap.is_finite()) {
            return Err(IngestError::NonPositiveMarketCap { stock_id, date });
        }
        if !(dollar_volume >= 0.0 && dollar_volume.is_finite()) {
            return Err(IngestError::NegativeVolume { stock_id, date });
        }
        let spread = match (bid, ask) {
            (Some(b), Some(a)) => {
                if a < b {
                    return Err(IngestError::CrossedQuote {
                        stock_id,
                        date,
                        bid: b,
                        ask: a,
                    });
                }
                // Non-positive quotes carry no usable spread.
                spread_bps(b, a).ok()
            }
            _ => None,
        };
        Ok(Self {
            stock_id,
            date,
            open_price,
            market_cap,
            dollar_volume,
            bid,
            ask,
            spread_bps: spread,
        })
    }
}

fn optional(field: &str, raw: &str) -> Result<Option<f64>, IngestError> {
    if raw.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(field, raw).map(Some)
    }
}

/// Loads `date,stock_id,open,market_cap,dollar_volume,bid,ask`. Bid and ask may be empty.
pub fn load_market_panel(path: &Path) -> Result<Vec<MarketObservation>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    check_header(path, reader.headers()?, &MARKET_COLUMNS)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let date = parse_date(&rec[0])?;
        let stock_id = rec[1].to_string();
        if !seen.insert((stock_id.clone(), date)) {
            return Err(IngestError::DuplicateKey { stock_id, date });
        }
        out.push(MarketObservation::new(
            stock_id,
            date,
            parse_f64("open", &rec[2])?,
            parse_f64("market_cap", &rec[3])?,
            parse_f64("dollar_volume", &rec[4])?,
            optional("bid", &rec[5])?,
            optional("ask", &rec[6])?,
        )?);
    }
    Ok(out)
}

pub fn write_market_panel(path: &Path, rows: &[MarketObservation]) -> Result<(), IngestError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", MARKET_COLUMNS.join(","))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.date.format("%Y-%m-%d"),
            r.stock_id,
            r.open_price,
            r.market_cap,
            r.dollar_volume,
            opt(r.bid),
            opt(r.ask)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("market.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn two_valid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "date,stock_id,open,market_cap,dollar_volume,bid,ask\n\
             2025-04-02,AAPL,220.5,3.3e12,1.2e10,99.99,100.01\n\
             2025-04-02,MSFT,380,2.9e12,9e9,,\n",
        );
        let rows = load_market_panel(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].spread_bps.unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(rows[1].spread_bps, None);
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "date,stock_id,open,market_cap,dollar_volume,bid,ask\n\
             2025-04-02,AAPL,220,1,1,,\n2025-04-02,AAPL,221,1,1,,\n",
        );
        assert!(matches!(
            load_market_panel(&p),
            Err(IngestError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn zero_open_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "date,stock_id,open,market_cap,dollar_volume,bid,ask\n2025-04-02,AAPL,0,1,1,,\n",
        );
        assert!(matches!(
            load_market_panel(&p),
            Err(IngestError::NonPositivePrice { .. })
        ));
    }

    #[test]
    fn missing_column_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "date,stock_id,open,market_cap,bid,ask\n");
        match load_market_panel(&p) {
            Err(IngestError::MissingColumn { column, .. }) => assert_eq!(column, "dollar_volume"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crossed_quote_rejected() {
        let d = NaiveDate::from_ymd_opt(2025, 4, 2).unwrap();
        let err =
            MarketObservation::new("X", d, 10.0, 1.0, 1.0, Some(10.02), Some(10.0)).unwrap_err();
        assert!(matches!(err, IngestError::CrossedQuote { .. }));
    }
}
