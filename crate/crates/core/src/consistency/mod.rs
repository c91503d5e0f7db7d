//! Reliability battery over repeated-query panels.

mod corr;
mod ks;
mod reliability;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

pub use corr::{average_ranks, pearson, spearman};
pub use ks::{
    kolmogorov_sf, ks_battery, ks_two_sample, ks_uniform, KsBattery, KsResult, KsStockResult,
};
pub use reliability::{
    permutation_variance_test, production_alignment, rank_stability, split_half_reliability,
    AlignmentResult, PermutationResult, RankStabilityResult, SplitHalfResult,
};

use crate::ingest::{check_header, parse_date, parse_f64, IngestError};
use crate::rng::{derive_seed, RNG_ALGORITHM};

pub const PANEL_COLUMNS: [&str; 4] = ["stock_id", "date", "draw_index", "score"];
pub const PRODUCTION_COLUMNS: [&str; 3] = ["stock_id", "date", "score"];

#[derive(Debug, Error)]
pub enum ConsistencyError {
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite score")]
    NonFinite,
    #[error("fewer than two cells with at least two draws")]
    DegenerateGroups,
    #[error("no cell has two or more draws")]
    NoEligibleGroups,
    #[error("no date has three or more stocks with two draws")]
    InsufficientCrossSection,
    #[error("only {0} overlapping cells, need at least 3")]
    InsufficientOverlap(usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("duplicate draw {draw_index} for ({stock_id}, {date})")]
    DuplicateDraw {
        stock_id: String,
        date: NaiveDate,
        draw_index: u32,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl From<csv::Error> for ConsistencyError {
    fn from(e: csv::Error) -> Self {
        ConsistencyError::Ingest(e.into())
    }
}

impl From<std::io::Error> for ConsistencyError {
    fn from(e: std::io::Error) -> Self {
        ConsistencyError::Ingest(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub draw_index: u32,
    pub score: f64,
}

pub type CellKey = (String, NaiveDate);

/// Draws per (stock, date), kept sorted by draw index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepeatedQueryPanel {
    cells: BTreeMap<CellKey, Vec<Draw>>,
}

impl RepeatedQueryPanel {
    pub fn insert(
        &mut self,
        stock_id: &str,
        date: NaiveDate,
        draw_index: u32,
        score: f64,
    ) -> Result<(), ConsistencyError> {
        if !score.is_finite() {
            return Err(ConsistencyError::NonFinite);
        }
        let draws = self.cells.entry((stock_id.to_string(), date)).or_default();
        match draws.binary_search_by_key(&draw_index, |d| d.draw_index) {
            Ok(_) => Err(ConsistencyError::DuplicateDraw {
                stock_id: stock_id.to_string(),
                date,
                draw_index,
            }),
            Err(pos) => {
                draws.insert(pos, Draw { draw_index, score });
                Ok(())
            }
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &[Draw])> {
        self.cells.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_draws(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// All scores per stock, pooled over dates.
    pub fn scores_by_stock(&self) -> BTreeMap<String, Vec<f64>> {
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for ((stock, _), draws) in &self.cells {
            out.entry(stock.clone())
                .or_default()
                .extend(draws.iter().map(|d| d.score));
        }
        out
    }

    pub fn cell_means(&self) -> BTreeMap<CellKey, f64> {
        self.cells
            .iter()
            .map(|(k, d)| {
                (
                    k.clone(),
                    d.iter().map(|x| x.score).sum::<f64>() / d.len() as f64,
                )
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, ConsistencyError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        check_header(path, reader.headers()?, &PANEL_COLUMNS)?;
        let mut panel = Self::default();
        for rec in reader.records() {
            let rec = rec?;
            let draw_index = rec[2]
                .parse::<u32>()
                .map_err(|_| IngestError::InvalidValue {
                    field: "draw_index".into(),
                    value: rec[2].to_string(),
                })?;
            panel.insert(
                &rec[0],
                parse_date(&rec[1])?,
                draw_index,
                parse_f64("score", &rec[3])?,
            )?;
        }
        Ok(panel)
    }

    pub fn write(&self, path: &Path) -> Result<(), ConsistencyError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{}", PANEL_COLUMNS.join(","))?;
        for ((stock, date), draws) in &self.cells {
            for d in draws {
                writeln!(
                    w,
                    "{stock},{},{},{}",
                    date.format("%Y-%m-%d"),
                    d.draw_index,
                    d.score
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_production(path: &Path) -> Result<BTreeMap<CellKey, f64>, ConsistencyError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    check_header(path, reader.headers()?, &PRODUCTION_COLUMNS)?;
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let key = (rec[0].to_string(), parse_date(&rec[1])?);
        let score = parse_f64("score", &rec[2])?;
        if !score.is_finite() {
            return Err(ConsistencyError::NonFinite);
        }
        if out.insert(key.clone(), score).is_some() {
            return Err(IngestError::DuplicateKey {
                stock_id: key.0,
                date: key.1,
            }
            .into());
        }
    }
    Ok(out)
}

pub fn write_production(
    path: &Path,
    scores: &BTreeMap<CellKey, f64>,
) -> Result<(), ConsistencyError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", PRODUCTION_COLUMNS.join(","))?;
    for ((stock, date), s) in scores {
        writeln!(w, "{stock},{},{s}", date.format("%Y-%m-%d"))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyConfig {
    pub n_perm: usize,
    pub rank_repetitions: usize,
    pub ks_level: f64,
    pub seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            n_perm: 1000,
            rank_repetitions: 20,
            ks_level: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub ks: KsBattery,
    pub permutation: PermutationResult,
    pub split_half: SplitHalfResult,
    pub rank_stability: RankStabilityResult,
    pub alignment: Option<AlignmentResult>,
    pub seed: u64,
    pub permutation_seed: u64,
    pub split_half_seed: u64,
    pub rank_stability_seed: u64,
    pub rng_algorithm: &'static str,
}

/// Runs all five tests. Sub-seeds are derived from `config.seed` per test.
pub fn run_consistency(
    panel: &RepeatedQueryPanel,
    production: Option<&BTreeMap<CellKey, f64>>,
    config: &ConsistencyConfig,
) -> Result<ConsistencyReport, ConsistencyError> {
    let permutation_seed = derive_seed(config.seed, "consistency/permutation");
    let split_half_seed = derive_seed(config.seed, "consistency/split-half");
    let rank_stability_seed = derive_seed(config.seed, "consistency/rank-stability");
    let alignment = match production {
        Some(p) => Some(production_alignment(&panel.cell_means(), p)?),
        None => None,
    };
    Ok(ConsistencyReport {
        ks: ks_battery(panel, config.ks_level)?,
        permutation: permutation_variance_test(panel, config.n_perm, permutation_seed)?,
        split_half: split_half_reliability(panel, split_half_seed)?,
        rank_stability: rank_stability(panel, config.rank_repetitions, rank_stability_seed)?,
        alignment,
        seed: config.seed,
        permutation_seed,
        split_half_seed,
        rank_stability_seed,
        rng_algorithm: RNG_ALGORITHM,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 4, 1).unwrap() + chrono::Days::new(i)
    }

    #[test]
    fn draws_stay_sorted_and_unique() {
        let mut p = RepeatedQueryPanel::default();
        p.insert("A", day(0), 3, 1.0).unwrap();
        p.insert("A", day(0), 1, 2.0).unwrap();
        let (_, d) = p.cells().next().unwrap();
        assert_eq!(
            d.iter().map(|x| x.draw_index).collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert!(matches!(
            p.insert("A", day(0), 1, 0.0),
            Err(ConsistencyError::DuplicateDraw { .. })
        ));
        assert!(matches!(
            p.insert("A", day(0), 2, f64::NAN),
            Err(ConsistencyError::NonFinite)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let mut p = RepeatedQueryPanel::default();
        for s in ["A", "B"] {
            for k in 0..3 {
                p.insert(s, day(k as u64), k, k as f64 * 0.125 - 1.0)
                    .unwrap();
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        p.write(&path).unwrap();
        assert_eq!(RepeatedQueryPanel::load(&path).unwrap(), p);

        let prod = p.cell_means();
        let ppath = dir.path().join("prod.csv");
        write_production(&ppath, &prod).unwrap();
        assert_eq!(load_production(&ppath).unwrap(), prod);
    }

    #[test]
    fn full_battery_runs() {
        let mut p = RepeatedQueryPanel::default();
        for s in 0..6 {
            for d in 0..4 {
                for k in 0..10u32 {
                    let v = s as f64 + ((s * 13 + d * 7 + k as usize * 3) % 17) as f64 * 0.05;
                    p.insert(&format!("S{s}"), day(d as u64), k, v).unwrap();
                }
            }
        }
        let cfg = ConsistencyConfig {
            n_perm: 99,
            seed: 11,
            ..Default::default()
        };
        let prod = p.cell_means();
        let a = run_consistency(&p, Some(&prod), &cfg).unwrap();
        let b = run_consistency(&p, Some(&prod), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ks.total, 6);
        assert_eq!(a.permutation.p_value, 0.01);
        assert!(a.split_half.rho > 0.9);
    }
}
