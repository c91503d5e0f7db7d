use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nowcast_core::config::RunConfig;
use nowcast_core::consistency::{
    load_production, run_consistency, ConsistencyConfig, RepeatedQueryPanel,
};
use nowcast_core::factormodel::RegressionSpec;
use nowcast_core::ingest::{ExtractSchema, FactorUnits, Horizon};
use nowcast_core::panel::{Panel, CORRELATION_SUBSET};
use nowcast_core::pipeline::{
    self, load_inputs, publish, sha256_hex, Inputs, PipelineError, Stage,
};
use nowcast_core::portfolio::{run_backtest, ReturnMode, Tier, TierSpec};
use nowcast_core::report::{self, Table};
use nowcast_core::rng::derive_seed;
use nowcast_core::simulate::{simulate_fixture, write_fixture, SimulationParams};

#[derive(Debug, Parser)]
#[command(
    name = "nowcast",
    version,
    about = "Backtest and evaluate daily stock-attractiveness panels"
)]
struct Cli {
    /// Run configuration (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportKind {
    Summary,
    Corr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TierArg {
    Top,
    Bottom,
    Groups,
    LongShort,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Weighting {
    Vw,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load inputs and report calendar coverage and data warnings.
    Ingest,
    /// Descriptive tables over the joined panel.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
    },
    /// Form portfolios and write snapshots, returns and turnover.
    Backtest {
        #[arg(long, value_enum, default_value = "top")]
        tier: TierArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        g: Option<usize>,
        #[arg(long, default_value = "1d")]
        horizon: Horizon,
        #[arg(long, value_enum, default_value = "vw")]
        weighting: Weighting,
        #[arg(long, default_value = "simple")]
        mode: ReturnMode,
    },
    /// Factor regressions with Newey-West standard errors.
    Regress {
        #[arg(long, value_delimiter = ',')]
        spec: Vec<RegressionSpec>,
        #[arg(long)]
        lags: Option<usize>,
        /// Units for the reported alpha.
        #[arg(long, default_value = "percent")]
        units: FactorUnits,
        #[arg(long, value_enum, default_value = "top")]
        tier: TierArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "1d")]
        horizon: Horizon,
    },
    /// Daily one-way turnover of the top and bottom portfolios.
    Turnover {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "1d")]
        horizon: Horizon,
    },
    /// Quoted spreads and cost drag of the top portfolio.
    Costs {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value = "1d")]
        horizon: Horizon,
    },
    /// Repeated-query consistency battery.
    Consistency {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        production: Option<PathBuf>,
        #[arg(long)]
        perms: Option<usize>,
        #[arg(long)]
        rank_repetitions: Option<usize>,
    },
    /// Write a synthetic input set with a known implanted alpha.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        stocks: usize,
        #[arg(long, default_value_t = 160)]
        days: usize,
        /// Implanted daily alpha of the top portfolio, in percent.
        #[arg(long, default_value_t = 0.184)]
        alpha_pct: f64,
        #[arg(long, default_value_t = 0)]
        carry_forward_every: usize,
        #[arg(long, default_value_t = 20)]
        top_n: usize,
    },
    /// Full pipeline.
    Run,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Pipeline(PipelineError),
    Other(String),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Pipeline(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Pipeline(e) if e.is_validation() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Other(m) => f.write_str(m),
            CliError::Pipeline(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate {
            stocks,
            days,
            alpha_pct,
            carry_forward_every,
            top_n,
        } => {
            let mut p =
                SimulationParams::new(cli.seed.unwrap_or(0), *stocks, *days, alpha_pct / 100.0);
            p.carry_forward_every = *carry_forward_every;
            p.top_n = *top_n;
            let fx = simulate_fixture(&p, 5).map_err(|e| CliError::Usage(e.to_string()))?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("fixture"));
            write_fixture(&fx, &dir, &ExtractSchema::default())
                .map_err(|e| CliError::Other(e.to_string()))?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Consistency {
            panel,
            production,
            perms,
            rank_repetitions,
        } => {
            let mut cfg = optional_config(&cli)?;
            let panel = panel
                .clone()
                .or_else(|| cfg.as_ref().and_then(|c| c.repeated.clone()))
                .ok_or_else(|| {
                    CliError::Usage(
                        "consistency needs --panel or `inputs.repeated` in --config".into(),
                    )
                })?;
            let production = production
                .clone()
                .or_else(|| cfg.as_ref().and_then(|c| c.production.clone()));
            let cfg = cfg.get_or_insert_with(|| {
                RunConfig::new(PathBuf::new(), PathBuf::new(), PathBuf::new())
            });
            cfg.repeated = Some(panel);
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(o) = &cli.out {
                cfg.out = o.clone();
            }
            cfg.production = production;
            if let Some(p) = perms {
                cfg.perms = *p;
            }
            if let Some(r) = rank_repetitions {
                cfg.rank_repetitions = *r;
            }
            let table = consistency(cfg)?;
            emit(&cli, cfg, vec![table], None)
        }
        Command::Run => {
            let cfg = required_config(&cli)?;
            let bundle = pipeline::run_pipeline(&cfg)?;
            println!("{} {}", bundle.dir.display(), bundle.manifest.bundle_sha256);
            Ok(())
        }
        cmd => {
            let mut cfg = required_config(&cli)?;
            let inputs = load_inputs(&cfg)?;
            let tables = data_command(cmd, &mut cfg, &inputs)?;
            emit(
                &cli,
                &cfg,
                tables,
                Some(inputs.schema.version().to_string()),
            )
        }
    }
}

fn optional_config(cli: &Cli) -> Result<Option<RunConfig>, CliError> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = RunConfig::load(path).map_err(|e| CliError::Pipeline(e.into()))?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(Some(cfg))
}

fn required_config(cli: &Cli) -> Result<RunConfig, CliError> {
    optional_config(cli)?
        .ok_or_else(|| CliError::Usage("this command needs --config <file>".into()))
}

fn consistency(cfg: &RunConfig) -> Result<Table, CliError> {
    let path = cfg.repeated.as_ref().expect("set by caller");
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "panel file not found: {}",
            path.display()
        )));
    }
    let panel = RepeatedQueryPanel::load(path)
        .map_err(|e| PipelineError::stage(Stage::Ingest, format!("{}: {e}", path.display())))?;
    let production = cfg
        .production
        .as_ref()
        .map(|p| {
            load_production(p)
                .map_err(|e| PipelineError::stage(Stage::Ingest, format!("{}: {e}", p.display())))
        })
        .transpose()?;
    let ccfg = ConsistencyConfig {
        n_perm: cfg.perms,
        rank_repetitions: cfg.rank_repetitions,
        ks_level: cfg.ks_level,
        seed: derive_seed(cfg.seed, "consistency"),
    };
    let report = run_consistency(&panel, production.as_ref(), &ccfg)
        .map_err(|e| PipelineError::stage(Stage::Consistency, e))?;
    Ok(report::consistency_table(&report))
}

fn portfolio_error(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::stage(Stage::Portfolio, e)
}

fn holding_days(h: Horizon) -> Result<usize, CliError> {
    h.holding_days()
        .ok_or_else(|| CliError::Usage(format!("horizon {h} has no holding period")))
}

fn data_command(
    cmd: &Command,
    cfg: &mut RunConfig,
    inputs: &Inputs,
) -> Result<Vec<Table>, CliError> {
    let joined = &inputs.joined;
    let mut warnings = inputs.warnings();
    let mut tables = Vec::new();
    match cmd {
        Command::Ingest => tables.push(report::coverage_table(&inputs.coverage)),
        Command::Report { kind } => {
            let panel = Panel::from_joined(joined, cfg.mode);
            match kind {
                ReportKind::Summary => tables.push(report::summary_table(&panel)),
                ReportKind::Corr => {
                    let names: Vec<&str> = CORRELATION_SUBSET.iter().map(|(n, _)| *n).collect();
                    let labels: Vec<&str> = CORRELATION_SUBSET.iter().map(|(_, l)| *l).collect();
                    let m = panel
                        .correlations(&names)
                        .map_err(|e| PipelineError::stage(Stage::Panel, e))?;
                    tables.push(report::corr_table(&m, &labels));
                }
            }
        }
        Command::Backtest {
            tier,
            n,
            g,
            horizon,
            weighting: Weighting::Vw,
            mode,
        } => {
            if *mode != ReturnMode::Simple {
                return Err(CliError::Usage(
                    "portfolio returns aggregate simple returns; `log` applies to per-stock diagnostics only".into(),
                ));
            }
            let n = n.unwrap_or(cfg.top_n);
            let results = match tier {
                TierArg::Top | TierArg::Bottom | TierArg::Groups => {
                    let spec = match tier {
                        TierArg::Top => TierSpec::Top(n),
                        TierArg::Bottom => TierSpec::Bottom(n),
                        _ => TierSpec::Groups(g.unwrap_or(cfg.groups)),
                    };
                    run_backtest(joined, *horizon, holding_days(*horizon)?, spec)
                        .map_err(portfolio_error)?
                }
                TierArg::LongShort => {
                    let r = pipeline::run_horizon(joined, *horizon, n)?;
                    tables.push(report::returns_table([(
                        *horizon,
                        Tier::LongShort,
                        &r.long_short,
                    )]));
                    pipeline::portfolio_warnings(*horizon, &r.top, &mut warnings);
                    pipeline::portfolio_warnings(*horizon, &r.bottom, &mut warnings);
                    vec![r.top, r.bottom]
                }
            };
            for r in &results {
                pipeline::portfolio_warnings(*horizon, r, &mut warnings);
            }
            tables.push(report::snapshots_table(
                results.iter().map(|r| (*horizon, r.snapshots.as_slice())),
            ));
            if *tier != TierArg::LongShort {
                tables.push(report::returns_table(
                    results.iter().map(|r| (*horizon, r.tier, &r.returns)),
                ));
            }
            tables.push(report::turnover_table(
                results.iter().map(|r| (*horizon, r.tier, &r.turnover)),
            ));
        }
        Command::Regress {
            spec,
            lags,
            units,
            tier,
            n,
            horizon,
        } => {
            if !spec.is_empty() {
                cfg.specs = spec.clone();
            }
            if let Some(l) = lags {
                cfg.nw_lag = *l;
            }
            let run = pipeline::run_horizon(joined, *horizon, n.unwrap_or(cfg.top_n))?;
            let (t, series) = match tier {
                TierArg::Top => (Tier::Top, &run.top.returns),
                TierArg::Bottom => (Tier::Bottom, &run.bottom.returns),
                TierArg::LongShort => (Tier::LongShort, &run.long_short),
                TierArg::Groups => {
                    return Err(CliError::Usage(
                        "regress supports top, bottom and long-short".into(),
                    ))
                }
            };
            let entries =
                pipeline::regress_series(*horizon, t, series, joined, &cfg.specs, cfg.nw_lag)?;
            tables.push(report::regress_table(&entries, *units));
        }
        Command::Turnover { n, horizon } => {
            let run = pipeline::run_horizon(joined, *horizon, n.unwrap_or(cfg.top_n))?;
            tables.push(report::turnover_table([
                (*horizon, Tier::Top, &run.top.turnover),
                (*horizon, Tier::Bottom, &run.bottom.turnover),
            ]));
        }
        Command::Costs { n, horizon } => {
            let run = pipeline::run_horizon(joined, *horizon, n.unwrap_or(cfg.top_n))?;
            tables.push(report::costs_table(&pipeline::portfolio_spreads(
                joined, &run.top,
            )));
        }
        Command::Consistency { .. } | Command::Simulate { .. } | Command::Run => {
            unreachable!("handled by caller")
        }
    }
    tables.push(report::warnings_table(&warnings));
    Ok(tables)
}

/// Publishes `tables` as a bundle; the manifest hash covers the config and the command.
fn emit(
    cli: &Cli,
    cfg: &RunConfig,
    tables: Vec<Table>,
    schema_version: Option<String>,
) -> Result<(), CliError> {
    let mut identity = cfg.canonical();
    let _ = writeln!(identity, "command = {:?}", cli.command);
    let out: &Path = &cfg.out;
    let bundle = publish(
        out,
        &tables,
        cfg.seed,
        sha256_hex(identity.as_bytes()),
        schema_version,
    )?;
    println!("{} {}", bundle.dir.display(), bundle.manifest.bundle_sha256);
    Ok(())
}
