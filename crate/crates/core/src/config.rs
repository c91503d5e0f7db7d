//! Run configuration from flat `section.key = value` text.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::factormodel::{RegressionSpec, DEFAULT_NW_LAG};
use crate::ingest::{FactorUnits, Horizon};
use crate::portfolio::ReturnMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}: {detail}")]
    Syntax {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("missing required config key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: `{value}`")]
    InvalidValue { key: String, value: String },
    #[error("{key}: file not found: {path}")]
    MissingFile { key: String, path: PathBuf },
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub signals: PathBuf,
    pub market: PathBuf,
    pub factors: PathBuf,
    pub factor_units: FactorUnits,
    pub schema: Option<PathBuf>,
    pub repeated: Option<PathBuf>,
    pub production: Option<PathBuf>,
    pub top_n: usize,
    pub groups: usize,
    pub horizons: Vec<Horizon>,
    pub mode: ReturnMode,
    pub nw_lag: usize,
    pub specs: Vec<RegressionSpec>,
    pub perms: usize,
    pub rank_repetitions: usize,
    pub ks_level: f64,
    pub leaderboard_k: usize,
    pub seed: u64,
    pub out: PathBuf,
}

/// Keys accepted in config files, in canonical order.
pub const CONFIG_KEYS: [&str; 19] = [
    "inputs.signals",
    "inputs.market",
    "inputs.factors",
    "inputs.factor_units",
    "inputs.schema",
    "inputs.repeated",
    "inputs.production",
    "portfolio.top_n",
    "portfolio.groups",
    "portfolio.horizons",
    "portfolio.mode",
    "regress.nw_lag",
    "regress.specs",
    "consistency.perms",
    "consistency.rank_repetitions",
    "consistency.ks_level",
    "report.leaderboard_k",
    "run.seed",
    "run.out",
];

fn parse_list<T, E>(
    key: &str,
    raw: &str,
    f: impl Fn(&str) -> Result<T, E>,
) -> Result<Vec<T>, ConfigError> {
    let items = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            f(s).map_err(|_| ConfigError::InvalidValue {
                key: key.into(),
                value: raw.into(),
            })
        })
        .collect::<Result<Vec<T>, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::InvalidValue {
            key: key.into(),
            value: raw.into(),
        });
    }
    Ok(items)
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        value: raw.into(),
    })
}

impl RunConfig {
    /// Defaults for everything except the three required inputs.
    pub fn new(signals: PathBuf, market: PathBuf, factors: PathBuf) -> Self {
        Self {
            signals,
            market,
            factors,
            factor_units: FactorUnits::Percent,
            schema: None,
            repeated: None,
            production: None,
            top_n: 20,
            groups: 50,
            horizons: vec![
                Horizon::Day,
                Horizon::Week,
                Horizon::Month,
                Horizon::Quarter,
            ],
            mode: ReturnMode::Simple,
            nw_lag: DEFAULT_NW_LAG,
            specs: RegressionSpec::ALL.to_vec(),
            perms: 1000,
            rank_repetitions: 20,
            ks_level: 0.05,
            leaderboard_k: 20,
            seed: 0,
            out: PathBuf::from("report"),
        }
    }

    /// Parses key/value text. Relative paths resolve against `base`.
    pub fn parse(text: &str, source: &Path, base: &Path) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    path: source.into(),
                    line: i + 1,
                    detail: "expected `key = value`".into(),
                });
            };
            let key = k.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key));
            }
            if kv.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    path: source.into(),
                    line: i + 1,
                    detail: format!("duplicate key `{key}`"),
                });
            }
        }
        let path = |k: &str| kv.get(k).map(|v| base.join(v));
        let required = |k: &str| path(k).ok_or_else(|| ConfigError::MissingKey(k.into()));
        let mut cfg = Self::new(
            required("inputs.signals")?,
            required("inputs.market")?,
            required("inputs.factors")?,
        );
        cfg.schema = path("inputs.schema");
        cfg.repeated = path("inputs.repeated");
        cfg.production = path("inputs.production");
        if let Some(p) = path("run.out") {
            cfg.out = p;
        }
        for (k, v) in &kv {
            match k.as_str() {
                "inputs.factor_units" => cfg.factor_units = parse_value(k, v)?,
                "portfolio.top_n" => cfg.top_n = parse_value(k, v)?,
                "portfolio.groups" => cfg.groups = parse_value(k, v)?,
                "portfolio.horizons" => cfg.horizons = parse_list(k, v, str::parse::<Horizon>)?,
                "portfolio.mode" => cfg.mode = parse_value(k, v)?,
                "regress.nw_lag" => cfg.nw_lag = parse_value(k, v)?,
                "regress.specs" => cfg.specs = parse_list(k, v, str::parse::<RegressionSpec>)?,
                "consistency.perms" => cfg.perms = parse_value(k, v)?,
                "consistency.rank_repetitions" => cfg.rank_repetitions = parse_value(k, v)?,
                "consistency.ks_level" => cfg.ks_level = parse_value(k, v)?,
                "report.leaderboard_k" => cfg.leaderboard_k = parse_value(k, v)?,
                "run.seed" => cfg.seed = parse_value(k, v)?,
                _ => {}
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Every referenced input exists and numeric settings are usable.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let inputs = [
            ("inputs.signals", Some(&self.signals)),
            ("inputs.market", Some(&self.market)),
            ("inputs.factors", Some(&self.factors)),
            ("inputs.schema", self.schema.as_ref()),
            ("inputs.repeated", self.repeated.as_ref()),
            ("inputs.production", self.production.as_ref()),
        ];
        for (key, p) in inputs {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(ConfigError::MissingFile {
                        key: key.into(),
                        path: p.clone(),
                    });
                }
            }
        }
        let invalid = |key: &str, value: String| {
            Err(ConfigError::InvalidValue {
                key: key.into(),
                value,
            })
        };
        if self.top_n == 0 {
            return invalid("portfolio.top_n", "0".into());
        }
        if self.groups == 0 {
            return invalid("portfolio.groups", "0".into());
        }
        if let Some(h) = self.horizons.iter().find(|h| h.holding_days().is_none()) {
            return invalid("portfolio.horizons", h.to_string());
        }
        if self.perms == 0 {
            return invalid("consistency.perms", "0".into());
        }
        if !(self.ks_level > 0.0 && self.ks_level < 1.0) {
            return invalid("consistency.ks_level", self.ks_level.to_string());
        }
        if self.production.is_some() && self.repeated.is_none() {
            return Err(ConfigError::MissingKey("inputs.repeated".into()));
        }
        Ok(())
    }

    /// Canonical text form, hashed into the manifest. The output directory is left out so
    /// a bundle's bytes do not depend on where it is written.
    pub fn canonical(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let join = |v: Vec<String>| v.join(",");
        let values = [
            self.signals.display().to_string(),
            self.market.display().to_string(),
            self.factors.display().to_string(),
            match self.factor_units {
                FactorUnits::Percent => "percent".into(),
                FactorUnits::Decimal => "decimal".into(),
            },
            opt(&self.schema),
            opt(&self.repeated),
            opt(&self.production),
            self.top_n.to_string(),
            self.groups.to_string(),
            join(self.horizons.iter().map(|h| h.to_string()).collect()),
            match self.mode {
                ReturnMode::Simple => "simple".into(),
                ReturnMode::Log => "log".into(),
            },
            self.nw_lag.to_string(),
            join(
                self.specs
                    .iter()
                    .map(|s| s.label().to_ascii_lowercase())
                    .collect(),
            ),
            self.perms.to_string(),
            self.rank_repetitions.to_string(),
            self.ks_level.to_string(),
            self.leaderboard_k.to_string(),
            self.seed.to_string(),
        ];
        CONFIG_KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_defaults() {
        let text =
            "# comment\ninputs.signals = s.csv\ninputs.market = m.csv\ninputs.factors = f.csv\n\
                    portfolio.horizons = 1d, 1m\nregress.specs = capm,ff6\nrun.seed = 42\n";
        let cfg = RunConfig::parse(text, Path::new("x.cfg"), Path::new("/data")).unwrap();
        assert_eq!(cfg.signals, PathBuf::from("/data/s.csv"));
        assert_eq!(cfg.horizons, vec![Horizon::Day, Horizon::Month]);
        assert_eq!(cfg.specs, vec![RegressionSpec::Capm, RegressionSpec::Ff6]);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.top_n, 20);
        assert_eq!(cfg.nw_lag, 5);
    }

    #[test]
    fn canonical_round_trips() {
        let text =
            "inputs.signals = s.csv\ninputs.market = m.csv\ninputs.factors = f.csv\nrun.seed = 7\n";
        let cfg = RunConfig::parse(text, Path::new("x"), Path::new("/d")).unwrap();
        let again = RunConfig::parse(
            &cfg.canonical()
                .replace("inputs.schema = \n", "")
                .replace("inputs.repeated = \n", "")
                .replace("inputs.production = \n", ""),
            Path::new("x"),
            Path::new("/"),
        )
        .unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn errors() {
        let p = Path::new("c.cfg");
        assert!(matches!(
            RunConfig::parse("bogus.key = 1", p, Path::new(".")),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("inputs.market = m", p, Path::new(".")),
            Err(ConfigError::MissingKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("no equals", p, Path::new(".")),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        let cfg = RunConfig::new(
            "/nonexistent/s.csv".into(),
            "/nonexistent/m.csv".into(),
            "/nonexistent/f.csv".into(),
        );
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("/nonexistent/s.csv"), "{err}");
    }
}
