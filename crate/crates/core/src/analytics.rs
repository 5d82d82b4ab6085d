//! Back-test rollouts, performance metrics, and the training-slope diagnostic.
//!
//! Conventions: 252 trading days per year, zero risk-free rate, population
//! standard deviations, and a downside threshold of zero for Sortino ratios.
//! Ratios with a zero denominator are undefined and reported as `null`.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::AlignedMarket;
use crate::neural::ActorNet;
use crate::trading_env::{EnvConfig, EnvState, TradingEnv};

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Maps an environment state to an action for the environment.
pub trait Policy {
    fn action(&self, state: &EnvState) -> Result<Vec<f64>>;
}

impl<F> Policy for F
where
    F: Fn(&EnvState) -> Result<Vec<f64>>,
{
    fn action(&self, state: &EnvState) -> Result<Vec<f64>> {
        self(state)
    }
}

/// Greedy (noise-free) actor policy.
pub struct GreedyActor<'a> {
    pub actor: &'a ActorNet,
    pub arbitrage: bool,
}

impl Policy for GreedyActor<'_> {
    fn action(&self, state: &EnvState) -> Result<Vec<f64>> {
        Ok(self.actor.act(&state.tensor, self.arbitrage)?.into_vec())
    }
}

/// Inclusive range of day indices on a market's date axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayRange {
    pub start: usize,
    pub end: usize,
}

impl DayRange {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if end <= start {
            return Err(Error::Config(format!("empty day range {start}..={end}")));
        }
        Ok(Self { start, end })
    }

    pub fn overlaps(&self, other: &DayRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Every field is `None` when undefined for the series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub simple_daily_return: Option<f64>,
    pub log_daily_return: Option<f64>,
    pub simple_annual_sharpe: Option<f64>,
    pub log_annual_sharpe: Option<f64>,
    pub simple_annual_sortino: Option<f64>,
    pub log_annual_sortino: Option<f64>,
    pub mdd: Option<f64>,
}

/// Per-day trajectories of a back-test. Entry `k` describes the move from
/// day `k` to day `k + 1` of the tested range.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub strategy: String,
    pub asset_ids: Vec<String>,
    pub start_date: NaiveDate,
    pub initial_value: f64,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub simple_returns: Vec<f64>,
    pub log_returns: Vec<f64>,
    pub summary: Metrics,
}

impl BacktestReport {
    /// Builds a report from per-day values and fills in derived series and metrics.
    #[allow(clippy::too_many_arguments)]
    pub fn from_trajectory(
        strategy: impl Into<String>,
        asset_ids: Vec<String>,
        start_date: NaiveDate,
        initial_value: f64,
        dates: Vec<NaiveDate>,
        values: Vec<f64>,
        weights: Vec<Vec<f64>>,
        costs: Vec<f64>,
    ) -> Result<Self> {
        let n = values.len();
        if dates.len() != n || weights.len() != n || costs.len() != n {
            return Err(Error::Shape("back-test series differ in length".into()));
        }
        if !(initial_value > 0.0) || values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain("portfolio values must stay positive".into()));
        }
        let mut prev = initial_value;
        let mut simple_returns = Vec::with_capacity(n);
        let mut log_returns = Vec::with_capacity(n);
        for &v in &values {
            simple_returns.push(v / prev - 1.0);
            log_returns.push((v / prev).ln());
            prev = v;
        }
        let mut report = Self {
            strategy: strategy.into(),
            asset_ids,
            start_date,
            initial_value,
            dates,
            values,
            weights,
            costs,
            simple_returns,
            log_returns,
            summary: Metrics::default(),
        };
        report.summary = metric_suite(&report)?;
        Ok(report)
    }

    /// Value series with the starting value first.
    pub fn value_path(&self) -> Vec<f64> {
        std::iter::once(self.initial_value).chain(self.values.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Deterministic greedy rollout over `range`, starting all cash at value one.
pub fn run_backtest<P: Policy + ?Sized>(
    policy: &P,
    strategy: &str,
    market: &AlignedMarket,
    config: &EnvConfig,
    range: DayRange,
    declared_train: Option<DayRange>,
) -> Result<BacktestReport> {
    if range.end >= market.len() {
        return Err(Error::OutOfRange {
            t: range.end,
            len: market.len(),
        });
    }
    if range.start + 1 < config.window {
        return Err(Error::Window {
            t: range.start,
            needed: config.window,
        });
    }
    if let Some(train) = declared_train {
        if train.overlaps(&range) {
            log::warn!(
                "back-test range {}..={} overlaps the training range {}..={}",
                range.start,
                range.end,
                train.start,
                train.end
            );
        }
    }
    let steps = range.end - range.start;
    let cfg = EnvConfig {
        episode_len: steps,
        ..config.clone()
    };
    let env = TradingEnv::new(market, cfg)?;
    let mut state = env.reset_at(range.start, steps)?;
    let mut dates = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps);
    let mut costs = Vec::with_capacity(steps);
    while !state.done() {
        let action = policy.action(&state)?;
        let (tr, next) = env.step(&state, &action)?;
        dates.push(market.dates()[next.t]);
        values.push(next.value);
        weights.push(tr.action.into_vec());
        costs.push(tr.cost);
        state = next;
    }
    BacktestReport::from_trajectory(
        strategy,
        market.asset_ids().iter().map(|s| s.to_string()).collect(),
        market.dates()[range.start],
        1.0,
        dates,
        values,
        weights,
        costs,
    )
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Root mean square of the negative returns over all `N` observations.
pub fn downside_deviation(xs: &[f64]) -> f64 {
    (xs.iter().filter(|&&x| x < 0.0).map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Relative size below which a deviation counts as rounding noise.
const DISPERSION_EPS: f64 = 1e-13;

fn ratio(returns: &[f64], num: f64, den: f64) -> Option<f64> {
    let scale = returns.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    (den > DISPERSION_EPS * scale).then(|| num / den * TRADING_DAYS_PER_YEAR.sqrt())
}

/// Annualized Sharpe ratio; `None` when returns have no dispersion.
pub fn annual_sharpe(returns: &[f64]) -> Option<f64> {
    if returns.is_empty() {
        return None;
    }
    ratio(returns, mean(returns), population_std(returns))
}

/// Annualized Sortino ratio; `None` without any negative return.
pub fn annual_sortino(returns: &[f64]) -> Option<f64> {
    if returns.is_empty() {
        return None;
    }
    ratio(returns, mean(returns), downside_deviation(returns))
}

/// Largest peak-to-trough loss as a fraction of the peak.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in values {
        peak = peak.max(v);
        if peak > 0.0 {
            worst = worst.max(1.0 - v / peak);
        }
    }
    worst
}

/// The seven metrics over a value path (starting value first).
pub fn metrics_from_values(values: &[f64]) -> Result<Metrics> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "metrics need at least two values, got {}",
            values.len()
        )));
    }
    let simple: Vec<f64> = values.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let logs: Vec<f64> = values.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    Ok(Metrics {
        simple_daily_return: Some(mean(&simple)),
        log_daily_return: Some(mean(&logs)),
        simple_annual_sharpe: annual_sharpe(&simple),
        log_annual_sharpe: annual_sharpe(&logs),
        simple_annual_sortino: annual_sortino(&simple),
        log_annual_sortino: annual_sortino(&logs),
        mdd: Some(max_drawdown(values)),
    })
}

pub fn metric_suite(report: &BacktestReport) -> Result<Metrics> {
    metrics_from_values(&report.value_path())
}

/// Least-squares line through `(x, y)` points: `(slope, intercept)`.
pub fn ols(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Domain(format!(
            "regression needs at least two points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("regression points share one x value".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Regression of per-episode mean daily return on training step.
pub fn training_slope(log: &crate::ddpg::TrainLog) -> Result<(f64, f64)> {
    ols(&log.points())
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    strategy: &'a str,
    assets: &'a [String],
    start_date: String,
    end_date: String,
    days: usize,
    initial_value: f64,
    final_value: f64,
    total_cost: f64,
    conventions: Conventions,
    metrics: &'a Metrics,
}

#[derive(Serialize)]
struct Conventions {
    annualization_days: f64,
    risk_free_rate: f64,
    sortino_threshold: f64,
    std: &'static str,
}

fn write(path: &Path, contents: String) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<prefix>_summary.json`, `<prefix>_daily.csv`, `<prefix>_weights.csv`
/// and `<prefix>_plot.csv` into `dir`.
pub fn write_report(report: &BacktestReport, dir: &Path, prefix: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = SummaryFile {
        strategy: &report.strategy,
        assets: &report.asset_ids,
        start_date: report.start_date.to_string(),
        end_date: report.dates.last().map(|d| d.to_string()).unwrap_or_default(),
        days: report.len(),
        initial_value: report.initial_value,
        final_value: report.values.last().copied().unwrap_or(report.initial_value),
        total_cost: report.costs.iter().sum(),
        conventions: Conventions {
            annualization_days: TRADING_DAYS_PER_YEAR,
            risk_free_rate: 0.0,
            sortino_threshold: 0.0,
            std: "population",
        },
        metrics: &report.summary,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    write(&dir.join(format!("{prefix}_summary.json")), json + "\n")?;

    let mut daily = String::from("date,value,cost,simple_return,log_return\n");
    for k in 0..report.len() {
        daily.push_str(&format!(
            "{},{},{},{},{}\n",
            report.dates[k], report.values[k], report.costs[k], report.simple_returns[k], report.log_returns[k]
        ));
    }
    write(&dir.join(format!("{prefix}_daily.csv")), daily)?;

    let mut weights = String::from("date,cash");
    for id in &report.asset_ids {
        weights.push(',');
        weights.push_str(id);
    }
    weights.push('\n');
    for (d, w) in report.dates.iter().zip(&report.weights) {
        weights.push_str(&d.to_string());
        for v in w {
            weights.push_str(&format!(",{v}"));
        }
        weights.push('\n');
    }
    write(&dir.join(format!("{prefix}_weights.csv")), weights)?;

    let mut plot = String::from("step,value\n");
    for (k, v) in report.value_path().iter().enumerate() {
        plot.push_str(&format!("{k},{v}\n"));
    }
    write(&dir.join(format!("{prefix}_plot.csv")), plot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::drifting_market;

    #[test]
    fn mdd_hand_example() {
        assert_eq!(max_drawdown(&[1.0, 1.2, 0.9, 1.1]), 0.25);
        assert_eq!(max_drawdown(&[1.0, 1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn constant_log_return_metric() {
        let r = 0.001358;
        let values: Vec<f64> = (0..20).map(|k| (r * k as f64).exp()).collect();
        let m = metrics_from_values(&values).unwrap();
        assert!((m.log_daily_return.unwrap() - r).abs() < 1e-12);
        assert_eq!(m.log_annual_sortino, None);
    }

    #[test]
    fn symmetric_returns_average_out() {
        let mut values = vec![1.0];
        for k in 0..100 {
            let last = *values.last().unwrap();
            values.push(last * if k % 2 == 0 { 1.01f64 } else { 1.0 / 1.01 });
        }
        let m = metrics_from_values(&values).unwrap();
        assert!(m.log_daily_return.unwrap().abs() < 1e-15);
        // simple returns of a +r / -r log path do not cancel exactly
        assert!(m.simple_daily_return.unwrap().abs() < 1e-4);
        assert!(metrics_from_values(&[1.0]).is_err());
    }

    #[test]
    fn slope_examples() {
        assert!((ols(&[(0.0, 0.0), (100.0, 0.01)]).unwrap().0 - 1e-4).abs() < 1e-18);
        assert_eq!(ols(&[(0.0, 0.3), (1.0, 0.3), (5.0, 0.3)]).unwrap().0, 0.0);
        assert!(ols(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn all_cash_backtest_is_flat() {
        let market = drifting_market(&[0.01, -0.02, 0.005], 100);
        let cfg = EnvConfig {
            window: 10,
            mu: 0.0,
            ..EnvConfig::default()
        };
        let cash = |_: &EnvState| -> Result<Vec<f64>> { Ok(vec![1.0, 0.0, 0.0, 0.0]) };
        let report = run_backtest(&cash, "cash", &market, &cfg, DayRange::new(9, 99).unwrap(), None).unwrap();
        assert_eq!(report.len(), 90);
        assert!(report.values.iter().all(|&v| v == 1.0));
        let s = report.summary;
        assert_eq!(s.log_daily_return, Some(0.0));
        assert_eq!(s.simple_annual_sharpe, None);
        assert_eq!(s.log_annual_sortino, None);
        assert_eq!(s.mdd, Some(0.0));
    }

    #[test]
    fn constant_growth_sharpe_is_undefined() {
        let market = drifting_market(&[0.0, 0.01], 100);
        let cfg = EnvConfig { window: 10, mu: 0.0, ..EnvConfig::default() };
        let hold = |_: &EnvState| -> Result<Vec<f64>> { Ok(vec![0.0, 0.0, 1.0]) };
        let report = run_backtest(&hold, "hold", &market, &cfg, DayRange::new(20, 80).unwrap(), None).unwrap();
        assert_eq!(report.summary.log_annual_sharpe, None);
        assert_eq!(report.summary.simple_annual_sharpe, None);
    }

    #[test]
    fn backtest_range_checks() {
        let market = drifting_market(&[0.0, 0.01], 50);
        let cfg = EnvConfig { window: 10, ..EnvConfig::default() };
        let hold = |_: &EnvState| -> Result<Vec<f64>> { Ok(vec![0.0, 0.0, 1.0]) };
        assert!(run_backtest(&hold, "h", &market, &cfg, DayRange::new(5, 20).unwrap(), None).is_err());
        assert!(run_backtest(&hold, "h", &market, &cfg, DayRange::new(10, 50).unwrap(), None).is_err());
        assert!(DayRange::new(3, 3).is_err());
        assert!(DayRange::new(0, 5).unwrap().overlaps(&DayRange::new(5, 9).unwrap()));
        assert!(!DayRange::new(0, 4).unwrap().overlaps(&DayRange::new(5, 9).unwrap()));
    }
}
