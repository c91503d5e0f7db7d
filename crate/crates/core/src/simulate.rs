//! Synthetic fixture generator with a known Top-N alpha.
//!
//! Each trading date gets a random Top-N set with scores in [3, 5]; every other stock
//! scores below 3, so a Top-N sort recovers the set exactly. Stock returns follow
//!
//! ```text
//! r_it = rf_t + b_i' f_t + e_it + alpha * 1[i held on t]
//! ```
//!
//! so the value-weighted Top-N excess return has intercept `alpha` on the six factors.
//! On carry-forward dates no signals are emitted and the alpha follows the held set.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consistency::{write_production, CellKey, ConsistencyError, RepeatedQueryPanel};
use crate::ingest::{
    write_factor_panel, write_market_panel, write_signals_csv, Decision, ExtractSchema,
    FactorObservation, FactorUnits, IngestError, MarketObservation, SignalFields,
    SignalObservation,
};
use crate::rng::{stream, RNG_ALGORITHM};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("infeasible parameters: {0}")]
    InfeasibleParameters(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub seed: u64,
    pub n_stocks: usize,
    pub n_days: usize,
    /// Decimal per day.
    pub implanted_alpha: f64,
    pub top_n: usize,
    /// Every k-th date (k > 0) after the first two carries no signals.
    pub carry_forward_every: usize,
    pub start: NaiveDate,
    pub rf_daily: f64,
    pub factor_means: [f64; 6],
    pub factor_sds: [f64; 6],
    pub beta_means: [f64; 6],
    pub beta_sd: f64,
    pub idio_sd: f64,
    pub repeated_stocks: usize,
    pub repeated_dates: usize,
    pub draws_per_cell: usize,
    pub repeated_signal_sd: f64,
    pub repeated_noise_sd: f64,
}

impl SimulationParams {
    pub fn new(seed: u64, n_stocks: usize, n_days: usize, implanted_alpha: f64) -> Self {
        Self {
            seed,
            n_stocks,
            n_days,
            implanted_alpha,
            top_n: 20,
            carry_forward_every: 0,
            start: NaiveDate::from_ymd_opt(2025, 4, 1).expect("valid date"),
            rf_daily: 0.00016,
            factor_means: [0.0004, 0.0, 0.0, 0.0, 0.0, 0.0002],
            factor_sds: [0.010, 0.005, 0.005, 0.004, 0.003, 0.006],
            beta_means: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            beta_sd: 0.3,
            idio_sd: 0.02,
            repeated_stocks: 30,
            repeated_dates: 10,
            draws_per_cell: 35,
            repeated_signal_sd: 1.0,
            repeated_noise_sd: 0.5,
        }
    }

    /// Checks feasibility against the Top-N size and the Newey-West lag.
    pub fn validate(&self, nw_lag: usize) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::InfeasibleParameters(m));
        if self.top_n == 0 || self.n_stocks < 2 * self.top_n {
            return bad(format!(
                "n_stocks {} must be at least 2 * top_n ({})",
                self.n_stocks, self.top_n
            ));
        }
        if self.n_days < 2 * nw_lag + 10 {
            return bad(format!(
                "n_days {} must be at least 2 * lag + 10 = {}",
                self.n_days,
                2 * nw_lag + 10
            ));
        }
        if !self.implanted_alpha.is_finite() || self.implanted_alpha.abs() >= 0.1 {
            return bad(format!(
                "implanted alpha {} is not a plausible daily return",
                self.implanted_alpha
            ));
        }
        if self.repeated_stocks > self.n_stocks || self.repeated_dates > self.n_days {
            return bad("repeated panel is larger than the fixture".into());
        }
        if self.repeated_stocks > 0 && self.draws_per_cell < 2 {
            return bad("repeated panel needs at least 2 draws per cell".into());
        }
        if !(self.idio_sd >= 0.0
            && self.beta_sd >= 0.0
            && self.factor_sds.iter().all(|s| *s >= 0.0))
        {
            return bad("standard deviations must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub params: SimulationParams,
    pub dates: Vec<NaiveDate>,
    pub signals: Vec<SignalObservation>,
    pub market: Vec<MarketObservation>,
    pub factors: Vec<FactorObservation>,
    pub repeated: RepeatedQueryPanel,
    pub production: BTreeMap<CellKey, f64>,
    /// Held Top-N set per date index.
    pub held: Vec<Vec<String>>,
    pub betas: Vec<[f64; 6]>,
}

pub fn stock_id(i: usize) -> String {
    format!("S{i:04}")
}

/// Weekdays starting at `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite, non-negative sd")
}

fn signal_fields(
    score: f64,
    market_score: f64,
    sentiment: f64,
    open: f64,
    rng: &mut impl Rng,
) -> SignalFields {
    let mut attractiveness = [0.0; 6];
    for (h, a) in attractiveness.iter_mut().enumerate() {
        // Longer horizons drift upward, mirroring the optimism seen in long-horizon scores.
        let v = if h == 0 {
            score
        } else {
            score + 0.3 * h as f64 + rng.random_range(-0.5..0.5)
        };
        *a = v.clamp(-5.0, 5.0);
    }
    let mut russell = [0.0; 6];
    for (h, r) in russell.iter_mut().enumerate() {
        *r = (market_score + 0.25 * h as f64).clamp(-5.0, 5.0);
    }
    let decision = if score > 1.5 {
        Decision::Buy
    } else if score < -1.5 {
        Decision::Sell
    } else {
        Decision::Wait
    };
    let mut price_targets = [0.0; 7];
    price_targets[0] = open;
    for (k, p) in price_targets.iter_mut().enumerate().skip(1) {
        *p = open * (1.0 + 0.002 * score * k as f64);
    }
    let eps0 = open / rng.random_range(12.0..30.0);
    let mut eps_forecasts = [0.0; 5];
    for (k, e) in eps_forecasts.iter_mut().enumerate() {
        *e = eps0 * 1.06f64.powi(k as i32);
    }
    SignalFields {
        attractiveness,
        russell_attractiveness: russell,
        sentiment,
        divergence: score - market_score,
        prob_beat: 1.0 / (1.0 + (-0.8 * score).exp()),
        decision,
        price_targets,
        eps_forecasts,
        range_flags: Vec::new(),
        source_line: String::new(),
    }
}

pub fn simulate_fixture(
    params: &SimulationParams,
    nw_lag: usize,
) -> Result<Fixture, SimulateError> {
    params.validate(nw_lag)?;
    let p = params;
    let n = p.n_stocks;
    let dates = business_days(p.start, p.n_days);
    let ids: Vec<String> = (0..n).map(stock_id).collect();

    // Cross-sectional characteristics.
    let mut rng = stream(p.seed, "simulate/stocks");
    let beta_dist: Vec<Normal<f64>> = p.beta_means.iter().map(|m| normal(*m, p.beta_sd)).collect();
    let betas: Vec<[f64; 6]> = (0..n)
        .map(|_| std::array::from_fn(|j| beta_dist[j].sample(&mut rng)))
        .collect();
    let log_cap = normal(9.6, 1.2);
    let cap0: Vec<f64> = (0..n).map(|_| log_cap.sample(&mut rng).exp()).collect();
    let open0: Vec<f64> = (0..n).map(|_| rng.random_range(10.0..400.0)).collect();
    let spread_level: Vec<f64> = (0..n)
        .map(|_| normal(1.2, 0.6).sample(&mut rng).exp())
        .collect();
    let volume_rate: Vec<f64> = (0..n)
        .map(|_| normal(-5.3, 0.5).sample(&mut rng).exp())
        .collect();

    // Factors: row t drives the window from t to t + 1.
    let mut rng = stream(p.seed, "simulate/factors");
    let fdist: Vec<Normal<f64>> = p
        .factor_means
        .iter()
        .zip(&p.factor_sds)
        .map(|(m, s)| normal(*m, *s))
        .collect();
    let factors: Vec<FactorObservation> = dates
        .iter()
        .map(|d| {
            let f: [f64; 6] = std::array::from_fn(|j| fdist[j].sample(&mut rng));
            FactorObservation {
                date: *d,
                mkt_rf: f[0],
                smb: f[1],
                hml: f[2],
                rmw: f[3],
                cma: f[4],
                mom: f[5],
                rf: p.rf_daily,
            }
        })
        .collect();

    // Signal schedule and held sets.
    let mut rng = stream(p.seed, "simulate/selection");
    let carry_forward: Vec<bool> = (0..p.n_days)
        .map(|t| p.carry_forward_every > 0 && t >= 2 && t % p.carry_forward_every == 0)
        .collect();
    let mut held: Vec<Vec<usize>> = Vec::with_capacity(p.n_days);
    for t in 0..p.n_days {
        let set = if carry_forward[t] {
            held[t - 1].clone()
        } else {
            let mut s = index::sample(&mut rng, n, p.top_n).into_vec();
            s.sort_unstable();
            s
        };
        held.push(set);
    }

    // Prices and returns.
    let mut rng = stream(p.seed, "simulate/returns");
    let idio = normal(0.0, p.idio_sd);
    let mut opens = vec![open0.clone()];
    for t in 0..p.n_days - 1 {
        let f = factors[t].factors();
        let prev = &opens[t];
        let mut next = Vec::with_capacity(n);
        let mut is_held = vec![false; n];
        for &i in &held[t] {
            is_held[i] = true;
        }
        for i in 0..n {
            let systematic: f64 = betas[i].iter().zip(&f).map(|(b, x)| b * x).sum();
            let alpha = if is_held[i] { p.implanted_alpha } else { 0.0 };
            let r = (p.rf_daily + systematic + idio.sample(&mut rng) + alpha).max(-0.9);
            next.push(prev[i] * (1.0 + r));
        }
        opens.push(next);
    }

    let mut market = Vec::with_capacity(n * p.n_days);
    let mut rng = stream(p.seed, "simulate/market");
    for (t, d) in dates.iter().enumerate() {
        for i in 0..n {
            let open = opens[t][i];
            let cap = cap0[i] * open / open0[i];
            let half = spread_level[i] * rng.random_range(0.8..1.25) / 2.0 * 1e-4;
            let volume = cap * 1e6 * volume_rate[i] * rng.random_range(0.5..1.5);
            market.push(MarketObservation::new(
                ids[i].clone(),
                *d,
                open,
                cap,
                volume,
                Some(open * (1.0 - half)),
                Some(open * (1.0 + half)),
            )?);
        }
    }

    let mut signals = Vec::with_capacity(n * p.n_days);
    let mut rng = stream(p.seed, "simulate/signals");
    for (t, d) in dates.iter().enumerate() {
        if carry_forward[t] {
            continue;
        }
        let market_score: f64 = rng.random_range(-0.5..2.0);
        let sentiment = (market_score + rng.random_range(-1.0..1.0)).clamp(-5.0, 5.0);
        let mut top = vec![false; n];
        for &i in &held[t] {
            top[i] = true;
        }
        for i in 0..n {
            let score = if top[i] {
                rng.random_range(3.0..=5.0)
            } else {
                rng.random_range(-5.0..2.9)
            };
            let fields = signal_fields(score, market_score, sentiment, opens[t][i], &mut rng);
            signals.push(SignalObservation {
                stock_id: ids[i].clone(),
                date: *d,
                fields,
            });
        }
    }

    // Repeated-query panel: stock effect + cell effect + draw noise.
    let mut repeated = RepeatedQueryPanel::default();
    let mut production = BTreeMap::new();
    let mut rng = stream(p.seed, "simulate/repeated");
    let cell_noise = normal(0.0, p.repeated_signal_sd * 0.5);
    let stock_effect = normal(0.0, p.repeated_signal_sd);
    let draw_noise = normal(0.0, p.repeated_noise_sd);
    for id in ids.iter().take(p.repeated_stocks) {
        let mu = stock_effect.sample(&mut rng);
        for d in dates.iter().take(p.repeated_dates) {
            let cell = mu + cell_noise.sample(&mut rng);
            for k in 0..p.draws_per_cell {
                repeated.insert(id, *d, k as u32, cell + draw_noise.sample(&mut rng))?;
            }
            production.insert((id.clone(), *d), cell + draw_noise.sample(&mut rng));
        }
    }

    Ok(Fixture {
        params: p.clone(),
        dates,
        signals,
        market,
        factors,
        repeated,
        production,
        held: held
            .into_iter()
            .map(|s| s.into_iter().map(|i| ids[i].clone()).collect())
            .collect(),
        betas,
    })
}

/// File names written by [`write_fixture`].
pub const FIXTURE_FILES: [&str; 7] = [
    "signals.csv",
    "market.csv",
    "factors.csv",
    "repeated.csv",
    "production.csv",
    "params.json",
    "fixture.cfg",
];

/// Writes the fixture, a params sidecar and a ready-to-run config into `dir`.
pub fn write_fixture(
    fixture: &Fixture,
    dir: &Path,
    schema: &ExtractSchema,
) -> Result<(), SimulateError> {
    std::fs::create_dir_all(dir)?;
    write_signals_csv(&dir.join("signals.csv"), &fixture.signals, schema)?;
    write_market_panel(&dir.join("market.csv"), &fixture.market)?;
    write_factor_panel(
        &dir.join("factors.csv"),
        &fixture.factors,
        FactorUnits::Decimal,
    )?;
    fixture.repeated.write(&dir.join("repeated.csv"))?;
    write_production(&dir.join("production.csv"), &fixture.production)?;
    let sidecar = serde_json::json!({
        "params": fixture.params,
        "rng_algorithm": RNG_ALGORITHM,
        "factor_units": "decimal",
        "held": fixture.held.iter().zip(&fixture.dates).map(|(h, d)| (d.to_string(), h)).collect::<BTreeMap<_, _>>(),
    });
    std::fs::write(
        dir.join("params.json"),
        serde_json::to_string_pretty(&sidecar)? + "\n",
    )?;
    let mut cfg = std::fs::File::create(dir.join("fixture.cfg"))?;
    writeln!(cfg, "# generated fixture, paths relative to this file")?;
    writeln!(cfg, "inputs.signals = signals.csv")?;
    writeln!(cfg, "inputs.market = market.csv")?;
    writeln!(cfg, "inputs.factors = factors.csv")?;
    writeln!(cfg, "inputs.factor_units = decimal")?;
    writeln!(cfg, "inputs.repeated = repeated.csv")?;
    writeln!(cfg, "inputs.production = production.csv")?;
    writeln!(cfg, "run.seed = {}", fixture.params.seed)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, alpha: f64) -> Fixture {
        let mut p = SimulationParams::new(seed, 60, 40, alpha);
        p.repeated_stocks = 5;
        p.repeated_dates = 3;
        p.draws_per_cell = 4;
        simulate_fixture(&p, 5).unwrap()
    }

    #[test]
    fn calendar_skips_weekends() {
        let d = business_days(NaiveDate::from_ymd_opt(2025, 4, 1).unwrap(), 10);
        assert_eq!(d.len(), 10);
        assert!(d.iter().all(|x| x.weekday().number_from_monday() <= 5));
        assert_eq!(d[4], NaiveDate::from_ymd_opt(2025, 4, 7).unwrap());
    }

    #[test]
    fn deterministic() {
        let a = small(3, 0.001);
        let b = small(3, 0.001);
        assert_eq!(a.market, b.market);
        assert_eq!(a.signals, b.signals);
        assert_eq!(a.repeated, b.repeated);
        assert_ne!(small(4, 0.001).market, a.market);
    }

    #[test]
    fn held_set_scores_on_top() {
        let f = small(1, 0.0);
        let t = 5;
        let date = f.dates[t];
        let scores: BTreeMap<&str, f64> = f
            .signals
            .iter()
            .filter(|s| s.date == date)
            .map(|s| (s.stock_id.as_str(), s.fields.attractiveness[0]))
            .collect();
        let min_top = f.held[t]
            .iter()
            .map(|id| scores[id.as_str()])
            .fold(f64::INFINITY, f64::min);
        let max_rest = scores
            .iter()
            .filter(|(id, _)| !f.held[t].iter().any(|h| h == *id))
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(min_top > max_rest);
    }

    #[test]
    fn carry_forward_dates_have_no_signals() {
        let mut p = SimulationParams::new(2, 50, 30, 0.0);
        p.carry_forward_every = 7;
        p.repeated_stocks = 0;
        let f = simulate_fixture(&p, 5).unwrap();
        assert!(!f.signals.iter().any(|s| s.date == f.dates[7]));
        assert_eq!(f.held[7], f.held[6]);
    }

    #[test]
    fn infeasible() {
        let p = SimulationParams::new(0, 30, 160, 0.0);
        assert!(matches!(
            simulate_fixture(&p, 5),
            Err(SimulateError::InfeasibleParameters(_))
        ));
        let p = SimulationParams::new(0, 100, 19, 0.0);
        assert!(matches!(
            simulate_fixture(&p, 5),
            Err(SimulateError::InfeasibleParameters(_))
        ));
    }
}
