//! Rank-sorted portfolio formation and holding-period accounting.

mod backtest;
mod overlap;
mod rank;
mod turnover;
mod weights;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backtest::{benchmark_series, long_short, run_backtest, BacktestResult, TierSpec};
pub use overlap::{cohort_path, overlapping_series, CohortPath, OverlapSeries};
pub use rank::{rank_groups, rank_universe, select_bottom_n, select_top_n, Selection};
pub use turnover::{average_score_leaderboard, membership_frequency, turnover, LeaderboardEntry};
pub use weights::{open_to_open_return, snapshot_return, value_weights, SnapshotReturn};

/// Weight sums are checked against this tolerance.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnMode {
    Log,
    Simple,
}

impl FromStr for ReturnMode {
    type Err = PortfolioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" => Ok(ReturnMode::Log),
            "simple" => Ok(ReturnMode::Simple),
            other => Err(PortfolioError::InvalidArgument(format!(
                "unknown return mode `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Top,
    Bottom,
    /// Zero-based rank group, 0 = most attractive.
    RankGroup(usize),
    LongShort,
    Market,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tier::Top => f.write_str("top"),
            Tier::Bottom => f.write_str("bottom"),
            Tier::RankGroup(g) => write!(f, "group_{:02}", g + 1),
            Tier::LongShort => f.write_str("long_short"),
            Tier::Market => f.write_str("market"),
        }
    }
}

/// Dated holdings for one horizon and tier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortfolioSnapshot {
    pub date: NaiveDate,
    pub horizon_days: usize,
    pub tier: Tier,
    /// Configured size N.
    pub size: usize,
    pub members: Vec<(String, f64)>,
    /// No fresh signal on this date; the previous membership is held.
    pub carry_forward: bool,
}

impl PortfolioSnapshot {
    pub fn new(
        date: NaiveDate,
        horizon_days: usize,
        tier: Tier,
        size: usize,
        members: Vec<(String, f64)>,
        carry_forward: bool,
    ) -> Result<Self, PortfolioError> {
        if members.is_empty() {
            return Err(PortfolioError::EmptyUniverse);
        }
        if members.len() > size {
            return Err(PortfolioError::InvalidArgument(format!(
                "{} members exceed configured size {size}",
                members.len()
            )));
        }
        let mut ids: Vec<&str> = members.iter().map(|(s, _)| s.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(PortfolioError::InvalidArgument(format!(
                "duplicate member {}",
                w[0]
            )));
        }
        let sum: f64 = members.iter().map(|(_, w)| w).sum();
        if members.iter().any(|(_, w)| !(*w > 0.0)) || (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(PortfolioError::InvalidArgument(format!(
                "weights must be positive and sum to 1, got {sum}"
            )));
        }
        Ok(Self {
            date,
            horizon_days,
            tier,
            size,
            members,
            carry_forward,
        })
    }

    pub fn contains(&self, stock: &str) -> bool {
        self.members.iter().any(|(s, _)| s == stock)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|(s, _)| s.as_str())
    }
}

/// Daily portfolio returns; `excess_return = raw_return - rf`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub raw_return: Vec<f64>,
    pub excess_return: Vec<f64>,
    /// Fewer than K cohorts were live.
    pub warmup: Vec<bool>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Drops warm-up days.
    pub fn steady_state(&self) -> ReturnSeries {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| !self.warmup[i]).collect();
        ReturnSeries {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            raw_return: keep.iter().map(|&i| self.raw_return[i]).collect(),
            excess_return: keep.iter().map(|&i| self.excess_return[i]).collect(),
            warmup: vec![false; keep.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TurnoverSeries {
    pub dates: Vec<NaiveDate>,
    pub turnover: Vec<f64>,
    pub carry_forward: Vec<bool>,
}

impl TurnoverSeries {
    pub fn mean(&self) -> Option<f64> {
        (!self.turnover.is_empty())
            .then(|| self.turnover.iter().sum::<f64>() / self.turnover.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PortfolioWarning {
    ShortUniverse {
        requested: usize,
        available: usize,
    },
    DroppedMember {
        date: Option<NaiveDate>,
        stock_id: String,
    },
    WarmUp {
        date: NaiveDate,
        live_cohorts: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum PortfolioError {
    #[error("empty universe")]
    EmptyUniverse,
    #[error("no market cap for {0}")]
    MissingCap(String),
    #[error("non-positive market cap for {0}")]
    NonPositiveCap(String),
    #[error("non-finite score for {0}")]
    NonFiniteScore(String),
    #[error("non-positive price")]
    NonPositivePrice,
    #[error("every member is missing a return")]
    AllMembersMissing,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
