//! Run configuration: flat `key = value` files with command-line overrides.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::analytics::DayRange;
use crate::baseline_factor::FactorStrategy;
use crate::ddpg::TrainConfig;
use crate::error::{Error, Result};
use crate::market_data::AlignedMarket;
use crate::portfolio_math::LeverageVector;
use crate::trading_env::EnvConfig;

/// Inclusive calendar span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateSpan {
    /// Day indices of `market` inside the span.
    pub fn resolve(&self, market: &AlignedMarket) -> Result<DayRange> {
        let start = market.index_on_or_after(self.start);
        let end = market.index_on_or_before(self.end);
        match (start, end) {
            (Some(s), Some(e)) if e > s => DayRange::new(s, e),
            _ => Err(Error::Config(format!(
                "{}..{} holds fewer than two trading days",
                self.start, self.end
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub market_dir: Option<PathBuf>,
    pub benchmark: String,
    pub factor_csv: Option<PathBuf>,
    /// Stock universe for the factor baseline; defaults to `market_dir`.
    pub factor_market_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub checkpoint_every: Option<usize>,
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    /// Share of the market used for training when no dates are given.
    pub train_fraction: f64,
    pub factor: FactorStrategy,
    pub group: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            market_dir: None,
            benchmark: crate::synthetic::BENCHMARK_ID.to_string(),
            factor_csv: None,
            factor_market_dir: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
            checkpoint_every: None,
            train_start: None,
            train_end: None,
            test_start: None,
            test_end: None,
            train_fraction: 0.8,
            factor: FactorStrategy::default(),
            group: "test".to_string(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

fn parse_date(key: &str, value: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .map_err(|_| Error::Config(format!("`{key}`: expected YYYY-MM-DD, got `{value}`")))
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn fmt_path(v: &Option<PathBuf>) -> String {
    v.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Applies one `key = value` setting. Empty values clear optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let opt_path = || (!value.is_empty()).then(|| PathBuf::from(value));
        let opt_date = |k: &str| -> Result<Option<NaiveDate>> {
            if value.is_empty() {
                Ok(None)
            } else {
                parse_date(k, value).map(Some)
            }
        };
        match key {
            "window" => self.env.window = parse_num(key, value)?,
            "episode_len" => self.env.episode_len = parse_num(key, value)?,
            "mu" => self.env.mu = parse_num(key, value)?,
            "arbitrage" => self.env.arbitrage_enabled = parse_bool(key, value)?,
            "leverage" => {
                self.env.leverage = if value.is_empty() {
                    None
                } else {
                    let v: Vec<f64> = value
                        .split(',')
                        .map(|s| parse_num(key, s.trim()))
                        .collect::<Result<_>>()?;
                    Some(LeverageVector::new(v)?)
                }
            }
            "batch" => self.train.batch = parse_num(key, value)?,
            "buffer" => self.train.buffer_capacity = parse_num(key, value)?,
            "critic_lr" => self.train.critic_lr = parse_num(key, value)?,
            "actor_lr" => self.train.actor_lr = parse_num(key, value)?,
            "total_steps" => self.train.total_steps = parse_num(key, value)?,
            "noise_mean" => self.train.noise_mean = parse_num(key, value)?,
            "noise_var" => self.train.noise_var = parse_num(key, value)?,
            "gamma" => self.train.gamma = parse_num(key, value)?,
            "tau" => self.train.tau = parse_num(key, value)?,
            "seed" => self.train.seed = parse_num(key, value)?,
            "market_dir" => self.market_dir = opt_path(),
            "benchmark" => self.benchmark = value.to_string(),
            "factor_csv" => self.factor_csv = opt_path(),
            "factor_market_dir" => self.factor_market_dir = opt_path(),
            "checkpoint" => self.checkpoint = opt_path(),
            "out" => self.out_dir = PathBuf::from(value),
            "checkpoint_every" => {
                self.checkpoint_every = if value.is_empty() {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "train_start" => self.train_start = opt_date(key)?,
            "train_end" => self.train_end = opt_date(key)?,
            "test_start" => self.test_start = opt_date(key)?,
            "test_end" => self.test_end = opt_date(key)?,
            "train_fraction" => self.train_fraction = parse_num(key, value)?,
            "long_n" => self.factor.long_n = parse_num(key, value)?,
            "short_n" => self.factor.short_n = parse_num(key, value)?,
            "group" => self.group = value.to_string(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every setting in file syntax; parsing it back yields the same config.
    pub fn to_text(&self) -> String {
        let lev = self
            .env
            .leverage
            .as_ref()
            .map(|l| l.as_slice().iter().map(f64::to_string).collect::<Vec<_>>().join(","))
            .unwrap_or_default();
        let pairs: Vec<(&str, String)> = vec![
            ("window", self.env.window.to_string()),
            ("episode_len", self.env.episode_len.to_string()),
            ("mu", self.env.mu.to_string()),
            ("arbitrage", self.env.arbitrage_enabled.to_string()),
            ("leverage", lev),
            ("batch", self.train.batch.to_string()),
            ("buffer", self.train.buffer_capacity.to_string()),
            ("critic_lr", self.train.critic_lr.to_string()),
            ("actor_lr", self.train.actor_lr.to_string()),
            ("total_steps", self.train.total_steps.to_string()),
            ("noise_mean", self.train.noise_mean.to_string()),
            ("noise_var", self.train.noise_var.to_string()),
            ("gamma", self.train.gamma.to_string()),
            ("tau", self.train.tau.to_string()),
            ("seed", self.train.seed.to_string()),
            ("market_dir", fmt_path(&self.market_dir)),
            ("benchmark", self.benchmark.clone()),
            ("factor_csv", fmt_path(&self.factor_csv)),
            ("factor_market_dir", fmt_path(&self.factor_market_dir)),
            ("checkpoint", fmt_path(&self.checkpoint)),
            ("out", self.out_dir.display().to_string()),
            ("checkpoint_every", fmt_opt(&self.checkpoint_every)),
            ("train_start", fmt_opt(&self.train_start)),
            ("train_end", fmt_opt(&self.train_end)),
            ("test_start", fmt_opt(&self.test_start)),
            ("test_end", fmt_opt(&self.test_end)),
            ("train_fraction", self.train_fraction.to_string()),
            ("long_n", self.factor.long_n.to_string()),
            ("short_n", self.factor.short_n.to_string()),
            ("group", self.group.clone()),
        ];
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        for (name, path) in [
            ("market_dir", &self.market_dir),
            ("factor_csv", &self.factor_csv),
            ("factor_market_dir", &self.factor_market_dir),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!("{name} `{}` does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Training and test day ranges on `market`. Missing dates fall back to a
    /// `train_fraction` split; the test range must start after training ends.
    pub fn split(&self, market: &AlignedMarket) -> Result<(DayRange, DayRange)> {
        let last = market.len().saturating_sub(1);
        let cut = ((market.len() as f64 * self.train_fraction) as usize).clamp(1, last.max(1));
        let first = market.dates()[0];
        let final_day = market.dates()[last];
        let train = DateSpan {
            start: self.train_start.unwrap_or(first),
            end: self.train_end.unwrap_or(market.dates()[cut - 1]),
        }
        .resolve(market)?;
        let test = DateSpan {
            start: self
                .test_start
                .unwrap_or_else(|| market.dates()[(train.end + 1).min(last)]),
            end: self.test_end.unwrap_or(final_day),
        }
        .resolve(market)?;
        if test.start <= train.end && train.start <= test.end {
            return Err(Error::Config(format!(
                "out-of-sample violation: test days {}..{} overlap training days {}..{}",
                market.dates()[test.start],
                market.dates()[test.end],
                market.dates()[train.start],
                market.dates()[train.end]
            )));
        }
        Ok((train, test))
    }
}
