//! Python bindings. Dates cross the boundary as ISO strings, series as lists of floats.

use std::path::PathBuf;

use nowcast_core::config::RunConfig as CoreConfig;
use nowcast_core::consistency::{
    self, load_production, run_consistency, ConsistencyConfig, RepeatedQueryPanel,
};
use nowcast_core::costs;
use nowcast_core::factormodel::{self, design_matrix, nw_cov_with_bread, ols_fit, RegressionSpec};
use nowcast_core::ingest::{ExtractSchema, Horizon};
use nowcast_core::pipeline;
use nowcast_core::portfolio::{run_backtest, Tier, TierSpec};
use nowcast_core::rng;
use nowcast_core::simulate::{simulate_fixture, write_fixture, SimulationParams};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: pipeline::PipelineError) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Run configuration. Construct from a config file or from the three required inputs.
#[pyclass(name = "RunConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    fn new(signals: PathBuf, market: PathBuf, factors: PathBuf) -> Self {
        Self {
            inner: CoreConfig::new(signals, market, factors),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        CoreConfig::load(&path)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }
    #[getter]
    fn out(&self) -> PathBuf {
        self.inner.out.clone()
    }
    #[setter]
    fn set_out(&mut self, v: PathBuf) {
        self.inner.out = v;
    }
    #[getter]
    fn top_n(&self) -> usize {
        self.inner.top_n
    }
    #[setter]
    fn set_top_n(&mut self, v: usize) {
        self.inner.top_n = v;
    }
    #[getter]
    fn groups(&self) -> usize {
        self.inner.groups
    }
    #[setter]
    fn set_groups(&mut self, v: usize) {
        self.inner.groups = v;
    }
    #[getter]
    fn nw_lag(&self) -> usize {
        self.inner.nw_lag
    }
    #[setter]
    fn set_nw_lag(&mut self, v: usize) {
        self.inner.nw_lag = v;
    }
    #[getter]
    fn perms(&self) -> usize {
        self.inner.perms
    }
    #[setter]
    fn set_perms(&mut self, v: usize) {
        self.inner.perms = v;
    }
    #[getter]
    fn rank_repetitions(&self) -> usize {
        self.inner.rank_repetitions
    }
    #[setter]
    fn set_rank_repetitions(&mut self, v: usize) {
        self.inner.rank_repetitions = v;
    }
    #[getter]
    fn horizons(&self) -> Vec<String> {
        self.inner.horizons.iter().map(|h| h.to_string()).collect()
    }
    #[setter]
    fn set_horizons(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.horizons = v
            .iter()
            .map(|s| s.parse::<Horizon>().map_err(value_err))
            .collect::<PyResult<_>>()?;
        Ok(())
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_err)
    }

    fn canonical(&self) -> String {
        self.inner.canonical()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(seed={}, out={:?})",
            self.inner.seed, self.inner.out
        )
    }
}

#[pyclass(name = "ReportBundle", frozen, skip_from_py_object)]
struct PyReportBundle {
    #[pyo3(get)]
    dir: PathBuf,
    #[pyo3(get)]
    seed: u64,
    #[pyo3(get)]
    config_sha256: String,
    #[pyo3(get)]
    bundle_sha256: String,
    /// File name to sha256.
    #[pyo3(get)]
    files: std::collections::BTreeMap<String, String>,
}

#[pyclass(name = "BacktestResult", frozen, skip_from_py_object)]
struct PyBacktestResult {
    #[pyo3(get)]
    tier: String,
    #[pyo3(get)]
    horizon: String,
    #[pyo3(get)]
    dates: Vec<String>,
    #[pyo3(get)]
    raw_return: Vec<f64>,
    #[pyo3(get)]
    excess_return: Vec<f64>,
    #[pyo3(get)]
    warmup: Vec<bool>,
    #[pyo3(get)]
    turnover_dates: Vec<String>,
    #[pyo3(get)]
    turnover: Vec<f64>,
    /// `(date, [(stock_id, weight), ...])` per formation date.
    #[pyo3(get)]
    snapshots: Vec<(String, Vec<(String, f64)>)>,
}

#[pyclass(name = "RegressionResult", frozen, skip_from_py_object)]
struct PyRegressionResult {
    #[pyo3(get)]
    spec: String,
    #[pyo3(get)]
    terms: Vec<String>,
    #[pyo3(get)]
    coefficients: Vec<f64>,
    #[pyo3(get)]
    nw_se: Vec<f64>,
    #[pyo3(get)]
    nw_t: Vec<f64>,
    #[pyo3(get)]
    p_values: Vec<f64>,
    #[pyo3(get)]
    lag: usize,
    #[pyo3(get)]
    nobs: usize,
    #[pyo3(get)]
    r2: f64,
    #[pyo3(get)]
    sharpe: Option<f64>,
}

#[pymethods]
impl PyRegressionResult {
    #[getter]
    fn alpha(&self) -> f64 {
        self.coefficients[0]
    }
    #[getter]
    fn alpha_t(&self) -> f64 {
        self.nw_t[0]
    }
}

/// Writes a synthetic fixture to `out` and returns the path of its config file.
#[pyfunction]
#[pyo3(signature = (out, seed=0, stocks=1000, days=160, alpha_pct=0.184, carry_forward_every=0, top_n=20))]
fn simulate(
    out: PathBuf,
    seed: u64,
    stocks: usize,
    days: usize,
    alpha_pct: f64,
    carry_forward_every: usize,
    top_n: usize,
) -> PyResult<PathBuf> {
    let mut p = SimulationParams::new(seed, stocks, days, alpha_pct / 100.0);
    p.carry_forward_every = carry_forward_every;
    p.top_n = top_n;
    let fx = simulate_fixture(&p, factormodel::DEFAULT_NW_LAG).map_err(value_err)?;
    write_fixture(&fx, &out, &ExtractSchema::default())
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(out.join("fixture.cfg"))
}

#[pyfunction]
fn run_pipeline(py: Python<'_>, config: &PyRunConfig) -> PyResult<PyReportBundle> {
    let cfg = config.inner.clone();
    let b = py
        .detach(move || pipeline::run_pipeline(&cfg))
        .map_err(pipeline_err)?;
    Ok(PyReportBundle {
        dir: b.dir,
        seed: b.manifest.seed,
        config_sha256: b.manifest.config_sha256,
        bundle_sha256: b.manifest.bundle_sha256,
        files: b.manifest.files,
    })
}

fn iso<T: ToString>(d: &[T]) -> Vec<String> {
    d.iter().map(|d| d.to_string()).collect()
}

/// Backtests one tier (`top`, `bottom` or `long_short`) at one horizon.
#[pyfunction]
#[pyo3(signature = (config, tier="top", horizon="1d", n=None))]
fn backtest(
    config: &PyRunConfig,
    tier: &str,
    horizon: &str,
    n: Option<usize>,
) -> PyResult<PyBacktestResult> {
    let cfg = &config.inner;
    let h: Horizon = horizon.parse().map_err(value_err)?;
    let n = n.unwrap_or(cfg.top_n);
    let inputs = pipeline::load_inputs(cfg).map_err(pipeline_err)?;
    let run = pipeline::run_horizon(&inputs.joined, h, n).map_err(pipeline_err)?;
    let (result, returns) = match tier {
        "top" => (&run.top, &run.top.returns),
        "bottom" => (&run.bottom, &run.bottom.returns),
        "long_short" => (&run.top, &run.long_short),
        other => return Err(value_err(format!("unknown tier `{other}`"))),
    };
    let long_short = tier == "long_short";
    Ok(PyBacktestResult {
        tier: tier.to_string(),
        horizon: h.to_string(),
        dates: iso(&returns.dates),
        raw_return: returns.raw_return.clone(),
        excess_return: returns.excess_return.clone(),
        warmup: returns.warmup.clone(),
        turnover_dates: if long_short {
            Vec::new()
        } else {
            iso(&result.turnover.dates)
        },
        turnover: if long_short {
            Vec::new()
        } else {
            result.turnover.turnover.clone()
        },
        snapshots: if long_short {
            Vec::new()
        } else {
            result
                .snapshots
                .iter()
                .map(|s| (s.date.to_string(), s.members.clone()))
                .collect()
        },
    })
}

/// Rank-group portfolios; returns `(group, mean turnover, steady-state mean return)` rows.
#[pyfunction]
#[pyo3(signature = (config, groups=None, horizon="1d"))]
fn group_backtest(
    config: &PyRunConfig,
    groups: Option<usize>,
    horizon: &str,
) -> PyResult<Vec<(String, Option<f64>, f64)>> {
    let cfg = &config.inner;
    let h: Horizon = horizon.parse().map_err(value_err)?;
    let k = h
        .holding_days()
        .ok_or_else(|| value_err(format!("horizon {h} has no holding period")))?;
    let inputs = pipeline::load_inputs(cfg).map_err(pipeline_err)?;
    let res = run_backtest(
        &inputs.joined,
        h,
        k,
        TierSpec::Groups(groups.unwrap_or(cfg.groups)),
    )
    .map_err(value_err)?;
    Ok(res
        .iter()
        .map(|r| {
            let s = r.returns.steady_state();
            (
                r.tier.to_string(),
                r.turnover.mean(),
                nowcast_core::stats::mean(&s.raw_return),
            )
        })
        .collect())
}

/// Factor regressions of one tier's steady-state returns.
#[pyfunction]
#[pyo3(signature = (config, specs=None, tier="top", horizon="1d", n=None, lag=None))]
fn regress(
    config: &PyRunConfig,
    specs: Option<Vec<String>>,
    tier: &str,
    horizon: &str,
    n: Option<usize>,
    lag: Option<usize>,
) -> PyResult<Vec<PyRegressionResult>> {
    let cfg = &config.inner;
    let h: Horizon = horizon.parse().map_err(value_err)?;
    let specs: Vec<RegressionSpec> = match specs {
        Some(v) => v
            .iter()
            .map(|s| s.parse().map_err(value_err))
            .collect::<PyResult<_>>()?,
        None => cfg.specs.clone(),
    };
    let inputs = pipeline::load_inputs(cfg).map_err(pipeline_err)?;
    let run =
        pipeline::run_horizon(&inputs.joined, h, n.unwrap_or(cfg.top_n)).map_err(pipeline_err)?;
    let (t, series) = match tier {
        "top" => (Tier::Top, &run.top.returns),
        "bottom" => (Tier::Bottom, &run.bottom.returns),
        "long_short" => (Tier::LongShort, &run.long_short),
        other => return Err(value_err(format!("unknown tier `{other}`"))),
    };
    let entries = pipeline::regress_series(
        h,
        t,
        series,
        &inputs.joined,
        &specs,
        lag.unwrap_or(cfg.nw_lag),
    )
    .map_err(pipeline_err)?;
    Ok(entries
        .into_iter()
        .map(|e| {
            let r = e.result;
            PyRegressionResult {
                spec: r.spec.label().to_string(),
                terms: r.terms,
                coefficients: r.coefficients,
                nw_se: r.nw_se,
                nw_t: r.nw_t,
                p_values: r.p_values,
                lag: r.lag,
                nobs: r.nobs,
                r2: r.r2,
                sharpe: e.sharpe,
            }
        })
        .collect())
}

/// OLS with an intercept and Newey-West covariance. Returns `(coefficients, nw_se)`.
#[pyfunction]
#[pyo3(signature = (y, regressors, lag=5))]
fn ols_nw(y: Vec<f64>, regressors: Vec<Vec<f64>>, lag: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let x = design_matrix(y.len(), &regressors).map_err(value_err)?;
    let fit = ols_fit(&y, &x).map_err(value_err)?;
    let cov =
        nw_cov_with_bread(&x, fit.residuals.as_slice(), lag, &fit.xtx_inv).map_err(value_err)?;
    let se = (0..cov.nrows()).map(|i| cov[(i, i)].sqrt()).collect();
    Ok((fit.coefficients.iter().copied().collect(), se))
}

#[pyfunction]
fn sharpe(excess: Vec<f64>) -> PyResult<f64> {
    factormodel::sharpe_annualized(&excess).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (returns, base=100.0))]
fn cumulative_index(returns: Vec<f64>, base: f64) -> PyResult<Vec<f64>> {
    factormodel::cumulative_index(&returns, base).map_err(value_err)
}

#[pyfunction]
fn spread_bps(bid: f64, ask: f64) -> PyResult<f64> {
    costs::spread_bps(bid, ask).map_err(value_err)
}

#[pyfunction]
fn cost_drag_bps(turnover: f64, spread_bps: f64) -> f64 {
    costs::cost_drag_bps(turnover, spread_bps)
}

/// Two-sample Kolmogorov-Smirnov `(D, p)`.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    consistency::ks_two_sample(&a, &b)
        .map(|r| (r.d, r.p_value))
        .map_err(value_err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    consistency::pearson(&x, &y).map_err(value_err)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    consistency::spearman(&x, &y).map_err(value_err)
}

/// Consistency battery on a repeated-query panel file; returns `{test: value}`.
#[pyfunction]
#[pyo3(signature = (panel, production=None, perms=1000, rank_repetitions=20, seed=0))]
fn consistency_battery(
    py: Python<'_>,
    panel: PathBuf,
    production: Option<PathBuf>,
    perms: usize,
    rank_repetitions: usize,
    seed: u64,
) -> PyResult<std::collections::BTreeMap<String, f64>> {
    let p = RepeatedQueryPanel::load(&panel).map_err(value_err)?;
    let prod = production
        .as_deref()
        .map(load_production)
        .transpose()
        .map_err(value_err)?;
    let cfg = ConsistencyConfig {
        n_perm: perms,
        rank_repetitions,
        ks_level: 0.05,
        seed: rng::derive_seed(seed, "consistency"),
    };
    let r = py
        .detach(|| run_consistency(&p, prod.as_ref(), &cfg))
        .map_err(value_err)?;
    let mut out = std::collections::BTreeMap::new();
    out.insert("ks_rejection_rate".to_string(), r.ks.rejection_rate);
    out.insert("permutation_p".to_string(), r.permutation.p_value);
    out.insert("split_half".to_string(), r.split_half.rho);
    out.insert("rank_stability".to_string(), r.rank_stability.rho);
    if let Some(a) = r.alignment {
        out.insert("production_alignment".to_string(), a.rho);
    }
    Ok(out)
}

#[pyfunction]
fn derive_seed(root: u64, label: &str) -> u64 {
    rng::derive_seed(root, label)
}

#[pymodule]
fn nowcast(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyReportBundle>()?;
    m.add_class::<PyBacktestResult>()?;
    m.add_class::<PyRegressionResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(backtest, m)?)?;
    m.add_function(wrap_pyfunction!(group_backtest, m)?)?;
    m.add_function(wrap_pyfunction!(regress, m)?)?;
    m.add_function(wrap_pyfunction!(ols_nw, m)?)?;
    m.add_function(wrap_pyfunction!(sharpe, m)?)?;
    m.add_function(wrap_pyfunction!(cumulative_index, m)?)?;
    m.add_function(wrap_pyfunction!(spread_bps, m)?)?;
    m.add_function(wrap_pyfunction!(cost_drag_bps, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(consistency_battery, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
