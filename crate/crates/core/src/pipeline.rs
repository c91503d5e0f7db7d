//! End-to-end run: ingest, panel, portfolios, regressions, costs and consistency,
//! published as one directory of CSVs plus a JSON manifest.
//!
//! Files are written to a sibling staging directory and renamed into place only after
//! every stage succeeded, so a failed run never leaves partial output behind.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::consistency::{load_production, run_consistency, ConsistencyConfig, RepeatedQueryPanel};
use crate::costs::{spread_series, SpreadSeries};
use crate::factormodel::{run_spec, sharpe_annualized, FactorModelError, RegressionSpec};
use crate::ingest::{
    align_calendar, load_factor_panel, load_market_panel, load_signals, CoverageReport,
    ExtractSchema, FactorPanel, FactorUnits, Horizon, IngestError, JoinedPanel, MarketObservation,
    SignalLoad,
};
use crate::panel::{Panel, CORRELATION_SUBSET};
use crate::portfolio::{
    average_score_leaderboard, benchmark_series, long_short, membership_frequency, run_backtest,
    BacktestResult, PortfolioWarning, ReturnSeries, Tier, TierSpec,
};
use crate::report::{self, RegressionEntry, Table};
use crate::rng::{derive_seed, RNG_ALGORITHM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Panel,
    Portfolio,
    FactorModel,
    Costs,
    Consistency,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Panel => "panel",
            Stage::Portfolio => "portfolio",
            Stage::FactorModel => "factormodel",
            Stage::Costs => "costs",
            Stage::Consistency => "consistency",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    pub fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    /// Bad configuration or unreadable/invalid input files.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Stage {
                    stage: Stage::Ingest,
                    ..
                }
        )
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::stage(stage, e)
}

pub struct Inputs {
    pub schema: ExtractSchema,
    pub signals: SignalLoad,
    pub market: Vec<MarketObservation>,
    pub factors: FactorPanel,
    pub joined: JoinedPanel,
    pub coverage: CoverageReport,
}

fn ingest_error(path: &Path, e: IngestError) -> PipelineError {
    let msg = e.to_string();
    // Header errors already carry the path.
    if msg.contains(&path.display().to_string()) {
        PipelineError::stage(Stage::Ingest, msg)
    } else {
        PipelineError::stage(Stage::Ingest, format!("{}: {msg}", path.display()))
    }
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, PipelineError> {
    cfg.validate()?;
    let schema = match &cfg.schema {
        Some(p) => ExtractSchema::load(p).map_err(|e| ingest_error(p, e))?,
        None => ExtractSchema::default(),
    };
    let signals = load_signals(&cfg.signals, &schema).map_err(|e| ingest_error(&cfg.signals, e))?;
    let market = load_market_panel(&cfg.market).map_err(|e| ingest_error(&cfg.market, e))?;
    let factors = load_factor_panel(&cfg.factors, cfg.factor_units)
        .map_err(|e| ingest_error(&cfg.factors, e))?;
    let (joined, coverage) =
        align_calendar(&signals.observations, &market, &factors.rows).map_err(at(Stage::Ingest))?;
    Ok(Inputs {
        schema,
        signals,
        market,
        factors,
        joined,
        coverage,
    })
}

impl Inputs {
    pub fn warnings(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        out.extend(
            self.signals
                .warnings
                .iter()
                .map(|w| ("ingest".into(), w.to_string())),
        );
        out.extend(
            self.factors
                .warnings
                .iter()
                .map(|w| ("ingest".into(), w.to_string())),
        );
        out.extend(self.signals.failures.iter().map(|f| {
            (
                "ingest".into(),
                format!("{} {} (line {}): {}", f.stock_id, f.date, f.line, f.error),
            )
        }));
        for d in &self.coverage.missing_factors {
            out.push(("ingest".into(), format!("{d}: no factor row, date dropped")));
        }
        for d in &self.coverage.missing_market {
            out.push((
                "ingest".into(),
                format!("{d}: no market rows, date dropped"),
            ));
        }
        for d in &self.coverage.carry_forward {
            out.push((
                "ingest".into(),
                format!("{d}: no signals, previous portfolio carried forward"),
            ));
        }
        out
    }
}

pub struct HorizonRun {
    pub horizon: Horizon,
    pub top: BacktestResult,
    pub bottom: BacktestResult,
    pub long_short: ReturnSeries,
}

pub fn run_horizon(
    joined: &JoinedPanel,
    horizon: Horizon,
    n: usize,
) -> Result<HorizonRun, PipelineError> {
    let k = horizon.holding_days().ok_or_else(|| {
        PipelineError::stage(
            Stage::Portfolio,
            format!("horizon {horizon} has no holding period"),
        )
    })?;
    let one = |spec| -> Result<BacktestResult, PipelineError> {
        run_backtest(joined, horizon, k, spec)
            .map_err(at(Stage::Portfolio))?
            .pop()
            .ok_or_else(|| PipelineError::stage(Stage::Portfolio, "backtest produced no portfolio"))
    };
    let top = one(TierSpec::Top(n))?;
    let bottom = one(TierSpec::Bottom(n))?;
    let ls = long_short(&top.returns, &bottom.returns);
    Ok(HorizonRun {
        horizon,
        top,
        bottom,
        long_short: ls,
    })
}

/// Regressions on the steady-state part of a series, one per spec.
pub fn regress_series(
    horizon: Horizon,
    tier: Tier,
    series: &ReturnSeries,
    joined: &JoinedPanel,
    specs: &[RegressionSpec],
    lag: usize,
) -> Result<Vec<RegressionEntry>, PipelineError> {
    let steady = series.steady_state();
    let sharpe = match sharpe_annualized(&steady.excess_return) {
        Ok(s) => Some(s),
        Err(FactorModelError::ZeroVariance) => None,
        Err(e) => {
            return Err(PipelineError::stage(
                Stage::FactorModel,
                format!("{horizon} {tier}: {e}"),
            ))
        }
    };
    specs
        .iter()
        .map(|&spec| {
            let result = run_spec(&steady, &joined.factors, spec, lag).map_err(|e| {
                PipelineError::stage(Stage::FactorModel, format!("{horizon} {tier} {spec}: {e}"))
            })?;
            Ok(RegressionEntry {
                horizon,
                tier,
                result,
                sharpe,
            })
        })
        .collect()
}

/// Spread and cost drag for one portfolio's snapshots.
pub fn portfolio_spreads(joined: &JoinedPanel, result: &BacktestResult) -> SpreadSeries {
    let market_by_date: BTreeMap<_, _> = joined
        .dates
        .iter()
        .copied()
        .zip(joined.market.iter())
        .collect();
    spread_series(&result.snapshots, &result.turnover, &market_by_date)
}

pub fn portfolio_warnings(h: Horizon, r: &BacktestResult, out: &mut Vec<(String, String)>) {
    for w in &r.warnings {
        let msg = match w {
            PortfolioWarning::ShortUniverse {
                requested,
                available,
            } => {
                format!(
                    "{h} {}: universe of {available} is smaller than N = {requested}",
                    r.tier
                )
            }
            PortfolioWarning::DroppedMember { date, stock_id } => format!(
                "{h} {}: {stock_id} dropped on {} (no next open)",
                r.tier,
                date.map(|d| d.to_string()).unwrap_or_default()
            ),
            PortfolioWarning::WarmUp { .. } => continue,
        };
        out.push(("portfolio".into(), msg));
    }
}

/// Builds every report table for a validated config.
pub fn build_tables(cfg: &RunConfig, inputs: &Inputs) -> Result<Vec<Table>, PipelineError> {
    let joined = &inputs.joined;
    let mut warnings = inputs.warnings();
    let mut tables = Vec::new();

    let panel = Panel::from_joined(joined, cfg.mode);
    tables.push(report::summary_table(&panel));
    let names: Vec<&str> = CORRELATION_SUBSET.iter().map(|(n, _)| *n).collect();
    let labels: Vec<&str> = CORRELATION_SUBSET.iter().map(|(_, l)| *l).collect();
    let corr = panel.correlations(&names).map_err(at(Stage::Panel))?;
    tables.push(report::corr_table(&corr, &labels));

    let runs: Vec<HorizonRun> = cfg
        .horizons
        .iter()
        .map(|&h| run_horizon(joined, h, cfg.top_n))
        .collect::<Result<_, _>>()?;
    let market = benchmark_series(joined).map_err(at(Stage::Portfolio))?;
    let primary = &runs[0];
    let groups = run_backtest(
        joined,
        primary.horizon,
        primary.horizon.holding_days().expect("validated horizon"),
        TierSpec::Groups(cfg.groups),
    )
    .map_err(at(Stage::Portfolio))?;
    for r in &runs {
        portfolio_warnings(r.horizon, &r.top, &mut warnings);
        portfolio_warnings(r.horizon, &r.bottom, &mut warnings);
    }

    tables.push(report::snapshots_table(
        runs.iter()
            .flat_map(|r| {
                [
                    (r.horizon, r.top.snapshots.as_slice()),
                    (r.horizon, r.bottom.snapshots.as_slice()),
                ]
            })
            .chain(
                groups
                    .iter()
                    .map(|g| (primary.horizon, g.snapshots.as_slice())),
            ),
    ));
    let mut series: Vec<(Horizon, Tier, &ReturnSeries)> = Vec::new();
    for r in &runs {
        series.push((r.horizon, Tier::Top, &r.top.returns));
        series.push((r.horizon, Tier::Bottom, &r.bottom.returns));
        series.push((r.horizon, Tier::LongShort, &r.long_short));
    }
    series.push((Horizon::Day, Tier::Market, &market));
    tables.push(report::returns_table(series.iter().copied()));
    tables.push(report::turnover_table(
        runs.iter()
            .flat_map(|r| {
                [
                    (r.horizon, Tier::Top, &r.top.turnover),
                    (r.horizon, Tier::Bottom, &r.bottom.turnover),
                ]
            })
            .chain(
                groups
                    .iter()
                    .map(|g| (primary.horizon, g.tier, &g.turnover)),
            ),
    ));

    let mut regressions = Vec::new();
    for (h, tier, s) in series.iter().filter(|(_, t, _)| *t != Tier::Market) {
        let steady = s.steady_state().len();
        // Need more rows than the widest model has coefficients.
        if steady <= 7 {
            warnings.push((
                Stage::FactorModel.to_string(),
                format!("{h} {tier}: {steady} steady-state returns, regressions skipped"),
            ));
            continue;
        }
        regressions.extend(regress_series(
            *h, *tier, s, joined, &cfg.specs, cfg.nw_lag,
        )?);
    }
    tables.push(report::regress_table(&regressions, FactorUnits::Percent));

    let group_fits: Vec<_> = groups
        .par_iter()
        .filter(|g| g.returns.steady_state().len() > 7)
        .map(|g| {
            run_spec(
                &g.returns.steady_state(),
                &joined.factors,
                RegressionSpec::Ff6,
                cfg.nw_lag,
            )
            .map_err(|e| PipelineError::stage(Stage::FactorModel, format!("{}: {e}", g.tier)))
        })
        .collect::<Result<_, _>>()?;
    if group_fits.len() < groups.len() {
        warnings.push((
            Stage::FactorModel.to_string(),
            format!(
                "{}: group regressions skipped for short series",
                primary.horizon
            ),
        ));
    }
    let group_rows: Vec<_> = groups
        .iter()
        .filter(|g| g.returns.steady_state().len() > 7)
        .zip(&group_fits)
        .map(|(g, fit)| (g.tier, fit, g.turnover.mean()))
        .collect();
    tables.push(report::group_alpha_table(&group_rows));

    let spreads = portfolio_spreads(joined, &primary.top);
    if spreads.dates.is_empty() {
        warnings.push((
            Stage::Costs.to_string(),
            "no date with observable spreads".into(),
        ));
    }
    tables.push(report::costs_table(&spreads));

    tables.push(
        report::cumulative_table([
            (primary.horizon, Tier::Top, &primary.top.returns),
            (primary.horizon, Tier::Bottom, &primary.bottom.returns),
            (primary.horizon, Tier::LongShort, &primary.long_short),
            (Horizon::Day, Tier::Market, &market),
        ])
        .map_err(at(Stage::FactorModel))?,
    );

    let board = average_score_leaderboard(
        &inputs.signals.observations,
        primary.horizon,
        cfg.leaderboard_k,
    );
    tables.push(report::leaderboard_table(primary.horizon, &board));
    let mut freq = BTreeMap::new();
    for s in &primary.top.snapshots {
        for id in s.ids() {
            freq.entry(id.to_string()).or_insert(0.0);
        }
    }
    for (id, f) in freq.iter_mut() {
        *f = membership_frequency(&primary.top.snapshots, id);
    }
    tables.push(report::frequency_table(primary.horizon, Tier::Top, &freq));

    if let Some(t) = consistency_table(cfg)? {
        tables.push(t);
    }
    tables.push(report::warnings_table(&warnings));
    Ok(tables)
}

pub fn consistency_table(cfg: &RunConfig) -> Result<Option<Table>, PipelineError> {
    let Some(path) = &cfg.repeated else {
        return Ok(None);
    };
    let panel = RepeatedQueryPanel::load(path)
        .map_err(|e| PipelineError::stage(Stage::Ingest, format!("{}: {e}", path.display())))?;
    let production =
        match &cfg.production {
            Some(p) => Some(load_production(p).map_err(|e| {
                PipelineError::stage(Stage::Ingest, format!("{}: {e}", p.display()))
            })?),
            None => None,
        };
    let ccfg = ConsistencyConfig {
        n_perm: cfg.perms,
        rank_repetitions: cfg.rank_repetitions,
        ks_level: cfg.ks_level,
        seed: derive_seed(cfg.seed, "consistency"),
    };
    let report =
        run_consistency(&panel, production.as_ref(), &ccfg).map_err(at(Stage::Consistency))?;
    Ok(Some(report::consistency_table(&report)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub rng_algorithm: String,
    pub schema_version: Option<String>,
    pub files: BTreeMap<String, String>,
    pub bundle_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn output_error(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::stage(Stage::Output, format!("{}: {e}", path.display()))
}

/// Writes `tables` plus `manifest.json` to a staging directory, then swaps it into `out`.
/// An existing `out` is replaced only if it is empty or holds a previous bundle.
pub fn publish(
    out: &Path,
    tables: &[Table],
    seed: u64,
    config_sha256: String,
    schema_version: Option<String>,
) -> Result<ReportBundle, PipelineError> {
    let name = out.file_name().ok_or_else(|| {
        PipelineError::stage(
            Stage::Output,
            format!("{}: not a directory name", out.display()),
        )
    })?;
    let parent = out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(|e| output_error(parent, e))?;
    if out.exists() {
        let is_bundle = out.join("manifest.json").is_file();
        let is_empty = std::fs::read_dir(out)
            .map(|mut d| d.next().is_none())
            .unwrap_or(false);
        if !(is_bundle || is_empty) {
            return Err(PipelineError::stage(
                Stage::Output,
                format!(
                    "{}: exists and is not a report bundle; refusing to overwrite",
                    out.display()
                ),
            ));
        }
    }
    let staging = parent.join(format!(".{}.staging", name.to_string_lossy()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| output_error(&staging, e))?;
    }
    let result = (|| {
        std::fs::create_dir(&staging).map_err(|e| output_error(&staging, e))?;
        let mut files = BTreeMap::new();
        for t in tables {
            let bytes = t.render(seed);
            let file = format!("{}.csv", t.name);
            files.insert(file.clone(), sha256_hex(&bytes));
            let p = staging.join(&file);
            std::fs::write(&p, bytes).map_err(|e| output_error(&p, e))?;
        }
        let listing: String = files.iter().map(|(f, h)| format!("{h}  {f}\n")).collect();
        let manifest = Manifest {
            tool: "nowcast".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config_sha256,
            rng_algorithm: RNG_ALGORITHM.into(),
            schema_version,
            files,
            bundle_sha256: sha256_hex(listing.as_bytes()),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(at(Stage::Output))? + "\n";
        let p = staging.join("manifest.json");
        std::fs::write(&p, json).map_err(|e| output_error(&p, e))?;
        if out.exists() {
            std::fs::remove_dir_all(out).map_err(|e| output_error(out, e))?;
        }
        std::fs::rename(&staging, out).map_err(|e| output_error(out, e))?;
        Ok(manifest)
    })();
    match result {
        Ok(manifest) => Ok(ReportBundle {
            dir: out.to_path_buf(),
            manifest,
        }),
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<ReportBundle, PipelineError> {
    let inputs = load_inputs(cfg)?;
    let tables = build_tables(cfg, &inputs)?;
    publish(
        &cfg.out,
        &tables,
        cfg.seed,
        sha256_hex(cfg.canonical().as_bytes()),
        Some(inputs.schema.version().to_string()),
    )
}
