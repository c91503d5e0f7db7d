//! Ingestion of AI response extracts, market panels and factor panels.
//!
//! Everything numeric is stored as a decimal fraction internally; percent
//! units only appear at file boundaries.

mod calendar;
mod extract;
mod factors;
mod market;
mod schema;
mod signals;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calendar::{align_calendar, CoverageReport, JoinedPanel};
pub use extract::{
    find_list_candidates, parse_response_list, serialize_response_list, ListCandidate, Literal,
};
pub use factors::{
    load_factor_panel, write_factor_panel, FactorObservation, FactorPanel, FactorUnits,
};
pub use market::{load_market_panel, write_market_panel, MarketObservation};
pub use schema::{ExtractSchema, FieldDescriptor, FieldKind, FieldSlot, SCHEMA_ARITY};
pub use signals::{
    load_signal_blocks, load_signals, load_signals_csv, write_signal_blocks, write_signals_csv,
    BlockFailure, SignalBlock, SignalLoad,
};

/// Signal horizons in the order the prompt asks for them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Horizon {
    Day,
    Week,
    Month,
    Quarter,
    HalfYear,
    Year,
}

impl Horizon {
    pub const ALL: [Horizon; 6] = [
        Horizon::Day,
        Horizon::Week,
        Horizon::Month,
        Horizon::Quarter,
        Horizon::HalfYear,
        Horizon::Year,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Horizon::Day => "1d",
            Horizon::Week => "1w",
            Horizon::Month => "1m",
            Horizon::Quarter => "1q",
            Horizon::HalfYear => "2q",
            Horizon::Year => "1y",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Holding period in trading days for the horizons that are backtested.
    pub fn holding_days(self) -> Option<usize> {
        match self {
            Horizon::Day => Some(1),
            Horizon::Week => Some(5),
            Horizon::Month => Some(21),
            Horizon::Quarter => Some(63),
            Horizon::HalfYear | Horizon::Year => None,
        }
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Horizon {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Horizon::ALL
            .into_iter()
            .find(|h| h.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| IngestError::InvalidValue {
                field: "horizon".into(),
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Buy,
    Wait,
    Sell,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Buy => "BUY",
            Decision::Wait => "WAIT",
            Decision::Sell => "SELL",
        }
    }
}

impl FromStr for Decision {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BUY" => Ok(Decision::Buy),
            "WAIT" | "HOLD" => Ok(Decision::Wait),
            "SELL" => Ok(Decision::Sell),
            _ => Err(()),
        }
    }
}

/// A value that fell outside its schema's nominal range. Kept as a flag, never clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeFlag {
    pub index: usize,
    pub field: String,
    pub value: f64,
}

/// Payload of one 40-element response list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFields {
    /// Horizons 1d, 1w, 1m, 1q, 2q, 1y.
    pub attractiveness: [f64; 6],
    pub russell_attractiveness: [f64; 6],
    pub sentiment: f64,
    pub divergence: f64,
    pub prob_beat: f64,
    pub decision: Decision,
    /// Today, 1d, 1w, 1m, 1q, 2q, 1y.
    pub price_targets: [f64; 7],
    /// Fiscal years 1..5.
    pub eps_forecasts: [f64; 5],
    pub range_flags: Vec<RangeFlag>,
    pub source_line: String,
}

impl SignalFields {
    pub fn attractiveness(&self, horizon: Horizon) -> f64 {
        self.attractiveness[horizon.index()]
    }
}

/// One stock-day of AI output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalObservation {
    pub stock_id: String,
    pub date: NaiveDate,
    pub fields: SignalFields,
}

/// Non-fatal findings collected while loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IngestWarning {
    GapInCalendar {
        after: NaiveDate,
        before: NaiveDate,
        missing_weekdays: usize,
    },
    RangeViolation {
        stock_id: String,
        date: NaiveDate,
        flag: RangeFlag,
    },
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestWarning::GapInCalendar { after, before, missing_weekdays } => write!(
                f,
                "gap in calendar: {missing_weekdays} weekday(s) missing between {after} and {before}"
            ),
            IngestWarning::RangeViolation { stock_id, date, flag } => write!(
                f,
                "{stock_id} {date}: field {} (index {}) = {} outside nominal range",
                flag.field, flag.index, flag.value
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no bracket-delimited list found")]
    NoListFound,
    #[error("wrong arity: found {found} elements, expected {expected}")]
    WrongArity { found: usize, expected: usize },
    #[error("unparseable element at index {index}: {detail}")]
    UnparseableElement { index: usize, detail: String },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: header mismatch, expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("duplicate key ({stock_id}, {date})")]
    DuplicateKey { stock_id: String, date: NaiveDate },
    #[error("duplicate factor row for {0}")]
    DuplicateDate(NaiveDate),
    #[error("non-positive open price for ({stock_id}, {date})")]
    NonPositivePrice { stock_id: String, date: NaiveDate },
    #[error("non-positive market cap for ({stock_id}, {date})")]
    NonPositiveMarketCap { stock_id: String, date: NaiveDate },
    #[error("negative dollar volume for ({stock_id}, {date})")]
    NegativeVolume { stock_id: String, date: NaiveDate },
    #[error("crossed quote for ({stock_id}, {date}): bid {bid} > ask {ask}")]
    CrossedQuote {
        stock_id: String,
        date: NaiveDate,
        bid: f64,
        ask: f64,
    },
    #[error("non-finite value in field `{field}` on {date}")]
    NonFinite { field: String, date: NaiveDate },
    #[error("invalid value for `{field}`: `{value}`")]
    InvalidValue { field: String, value: String },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("no common dates across signals, market and factor panels")]
    EmptyIntersection,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Accepts `YYYY-MM-DD` or `YYYYMMDD`.
pub fn parse_date(s: &str) -> Result<NaiveDate, IngestError> {
    let s = s.trim();
    let fmt = if s.len() == 8 && s.bytes().all(|b| b.is_ascii_digit()) {
        "%Y%m%d"
    } else {
        "%Y-%m-%d"
    };
    NaiveDate::parse_from_str(s, fmt).map_err(|_| IngestError::InvalidValue {
        field: "date".into(),
        value: s.to_string(),
    })
}

pub(crate) fn check_header(
    path: &std::path::Path,
    found: &csv::StringRecord,
    expected: &[&str],
) -> Result<(), IngestError> {
    for col in expected {
        if !found.iter().any(|h| h.trim() == *col) {
            return Err(IngestError::MissingColumn {
                path: path.to_path_buf(),
                column: col.to_string(),
            });
        }
    }
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a.trim() != *b) {
        return Err(IngestError::HeaderMismatch {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

pub(crate) fn parse_f64(field: &str, raw: &str) -> Result<f64, IngestError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| IngestError::InvalidValue {
            field: field.to_string(),
            value: raw.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_labels_round_trip() {
        let labels: Vec<_> = Horizon::ALL.iter().map(|h| h.label()).collect();
        assert_eq!(labels, ["1d", "1w", "1m", "1q", "2q", "1y"]);
        for h in Horizon::ALL {
            assert_eq!(h.label().parse::<Horizon>().unwrap(), h);
        }
        assert!("3d".parse::<Horizon>().is_err());
    }

    #[test]
    fn holding_days_mapping() {
        assert_eq!(Horizon::Day.holding_days(), Some(1));
        assert_eq!(Horizon::Week.holding_days(), Some(5));
        assert_eq!(Horizon::Month.holding_days(), Some(21));
        assert_eq!(Horizon::Quarter.holding_days(), Some(63));
        assert_eq!(Horizon::Year.holding_days(), None);
    }

    #[test]
    fn both_date_formats() {
        let d = NaiveDate::from_ymd_opt(2025, 4, 2).unwrap();
        assert_eq!(parse_date("2025-04-02").unwrap(), d);
        assert_eq!(parse_date("20250402").unwrap(), d);
        assert!(parse_date("04/02/2025").is_err());
    }
}
