//! Multi-factor long-short baseline.
//!
//! Every day each stock is scored by `0.5 * (-turnover) + 0.5 * ep_ratio`
//! from the previous day's data. The top `long_n` stocks are bought and the
//! bottom `short_n` sold short, each at `1 / (long_n + short_n)` of the book,
//! with no cash, no leverage and no transaction cost.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;

use crate::analytics::{BacktestReport, DayRange};
use crate::error::{Error, Result};
use crate::market_data::{relative_prices, AlignedMarket};
use crate::portfolio_math::{simple_return, LeverageVector, WeightVector};

pub const DEFAULT_LONG: usize = 20;
pub const DEFAULT_SHORT: usize = 20;

type Cell = (Option<f64>, Option<f64>);

/// Daily earnings-to-price ratios and turnovers; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    dates: Vec<NaiveDate>,
    asset_ids: Vec<String>,
    /// `[day][asset]`
    ep_ratio: Vec<Vec<Option<f64>>>,
    turnover: Vec<Vec<Option<f64>>>,
}

impl FactorPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        asset_ids: Vec<String>,
        ep_ratio: Vec<Vec<Option<f64>>>,
        turnover: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        let rows_ok = |v: &Vec<Vec<Option<f64>>>| {
            v.len() == dates.len() && v.iter().all(|row| row.len() == asset_ids.len())
        };
        if !rows_ok(&ep_ratio) || !rows_ok(&turnover) {
            return Err(Error::Shape(format!(
                "factor panel must be {} days x {} assets",
                dates.len(),
                asset_ids.len()
            )));
        }
        Ok(Self {
            dates,
            asset_ids,
            ep_ratio,
            turnover,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn ep_ratio(&self, t: usize, asset: usize) -> Option<f64> {
        self.ep_ratio[t][asset]
    }

    pub fn turnover(&self, t: usize, asset: usize) -> Option<f64> {
        self.turnover[t][asset]
    }

    /// Reads `date,asset,ep_ratio,turnover` rows; blank or malformed factor cells are missing.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn read_csv(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Format(format!("factor file lacks column `{name}`")))
        };
        let (cd, ca, ce, ct) = (col("date")?, col("asset")?, col("ep_ratio")?, col("turnover")?);
        let parse = |s: Option<&str>| s.and_then(|v| v.trim().parse::<f64>().ok()).filter(|v| v.is_finite());

        let mut cells: HashMap<(NaiveDate, String), Cell> = HashMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let raw_date = rec.get(cd).unwrap_or("").trim();
            if raw_date.is_empty() {
                continue;
            }
            let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
                .map_err(|_| Error::Format(format!("factor file: bad date `{raw_date}`")))?;
            let asset = rec.get(ca).unwrap_or("").trim().to_string();
            if asset.is_empty() {
                return Err(Error::Format(format!("factor file: missing asset on {date}")));
            }
            let value = (parse(rec.get(ce)), parse(rec.get(ct)));
            if cells.insert((date, asset.clone()), value).is_some() {
                return Err(Error::Format(format!("factor file: duplicate row {date} {asset}")));
            }
        }
        let mut dates: Vec<NaiveDate> = cells.keys().map(|k| k.0).collect();
        dates.sort();
        dates.dedup();
        let mut ids: Vec<String> = cells.keys().map(|k| k.1.clone()).collect();
        ids.sort();
        ids.dedup();
        let grid = |pick: fn(&Cell) -> Option<f64>| -> Vec<Vec<Option<f64>>> {
            dates
                .iter()
                .map(|d| {
                    ids.iter()
                        .map(|a| cells.get(&(*d, a.clone())).and_then(pick))
                        .collect()
                })
                .collect()
        };
        let ep = grid(|c| c.0);
        let to = grid(|c| c.1);
        Self::new(dates, ids, ep, to)
    }

    /// Re-indexes onto the market's dates and asset order; gaps become missing.
    pub fn align_to(&self, market: &AlignedMarket) -> FactorPanel {
        let date_pos: HashMap<NaiveDate, usize> =
            self.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let asset_pos: HashMap<&str, usize> = self
            .asset_ids
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        let ids: Vec<String> = market.asset_ids().iter().map(|s| s.to_string()).collect();
        let grid = |src: &Vec<Vec<Option<f64>>>| -> Vec<Vec<Option<f64>>> {
            market
                .dates()
                .iter()
                .map(|d| {
                    ids.iter()
                        .map(|a| match (date_pos.get(d), asset_pos.get(a.as_str())) {
                            (Some(&t), Some(&i)) => src[t][i],
                            _ => None,
                        })
                        .collect()
                })
                .collect()
        };
        FactorPanel {
            dates: market.dates().to_vec(),
            ep_ratio: grid(&self.ep_ratio),
            turnover: grid(&self.turnover),
            asset_ids: ids,
        }
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("date,asset,ep_ratio,turnover\n");
        for (t, d) in self.dates.iter().enumerate() {
            for (i, a) in self.asset_ids.iter().enumerate() {
                out.push_str(&format!(
                    "{d},{a},{},{}\n",
                    fmt(self.ep_ratio[t][i]),
                    fmt(self.turnover[t][i])
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorStrategy {
    pub long_n: usize,
    pub short_n: usize,
}

impl Default for FactorStrategy {
    fn default() -> Self {
        Self {
            long_n: DEFAULT_LONG,
            short_n: DEFAULT_SHORT,
        }
    }
}

/// Scores for trading on day `t`, computed from day `t - 1` factors.
/// Assets with a missing factor score `None`.
pub fn factor_score(panel: &FactorPanel, t: usize, min_universe: usize) -> Result<Vec<Option<f64>>> {
    if t == 0 || t >= panel.dates.len() {
        return Err(Error::OutOfRange {
            t,
            len: panel.dates.len(),
        });
    }
    let prev = t - 1;
    let scores: Vec<Option<f64>> = (0..panel.asset_ids.len())
        .map(|i| match (panel.ep_ratio[prev][i], panel.turnover[prev][i]) {
            (Some(ep), Some(to)) => Some(0.5 * (-to) + 0.5 * ep),
            _ => None,
        })
        .collect();
    let available = scores.iter().flatten().count();
    if available < min_universe {
        return Err(Error::InsufficientUniverse {
            available,
            required: min_universe,
        });
    }
    Ok(scores)
}

/// Long the top `long_n`, short the bottom `short_n`, equal absolute weights,
/// cash at zero. Ties rank by asset id.
pub fn select_weights(scores: &[Option<f64>], asset_ids: &[String], long_n: usize, short_n: usize) -> Result<WeightVector> {
    if scores.len() != asset_ids.len() {
        return Err(Error::Shape("one score per asset id required".into()));
    }
    let required = long_n + short_n;
    let mut ranked: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|v| (i, v)))
        .collect();
    if ranked.len() < required || required == 0 {
        return Err(Error::InsufficientUniverse {
            available: ranked.len(),
            required: required.max(1),
        });
    }
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| asset_ids[a.0].cmp(&asset_ids[b.0]))
    });
    let unit = 1.0 / required as f64;
    let mut w = vec![0.0; scores.len() + 1];
    for &(i, _) in &ranked[..long_n] {
        w[i + 1] = unit;
    }
    for &(i, _) in &ranked[ranked.len() - short_n..] {
        w[i + 1] = -unit;
    }
    WeightVector::new(w)
}

/// Daily-rebalanced factor portfolio over `range` of `market`.
pub fn run_factor_backtest(
    market: &AlignedMarket,
    panel: &FactorPanel,
    range: DayRange,
    strategy: FactorStrategy,
) -> Result<BacktestReport> {
    if range.end >= market.len() {
        return Err(Error::OutOfRange {
            t: range.end,
            len: market.len(),
        });
    }
    let panel = panel.align_to(market);
    let unit = LeverageVector::ones(market.num_assets() + 1);
    let min_universe = strategy.long_n + strategy.short_n;
    let steps = range.end - range.start;
    let mut value = 1.0;
    let mut dates = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps);
    let mut weights = Vec::with_capacity(steps);
    for t in range.start + 1..=range.end {
        let scores = factor_score(&panel, t, min_universe)?;
        let w = select_weights(&scores, panel.asset_ids(), strategy.long_n, strategy.short_n)?;
        let y = relative_prices(market, t)?;
        value *= simple_return(&w, &y, &unit)?.exp();
        dates.push(market.dates()[t]);
        values.push(value);
        weights.push(w.into_vec());
    }
    BacktestReport::from_trajectory(
        "multi-factor",
        market.asset_ids().iter().map(|s| s.to_string()).collect(),
        market.dates()[range.start],
        1.0,
        dates,
        values,
        weights,
        vec![0.0; steps],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{business_days, drifting_market};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i:02}")).collect()
    }

    fn panel_two_days(ep: &[f64], to: &[f64]) -> FactorPanel {
        let n = ep.len();
        let row_ep: Vec<Option<f64>> = ep.iter().map(|&v| Some(v)).collect();
        let row_to: Vec<Option<f64>> = to.iter().map(|&v| Some(v)).collect();
        FactorPanel::new(
            business_days(2),
            ids(n),
            vec![row_ep.clone(), row_ep],
            vec![row_to.clone(), row_to],
        )
        .unwrap()
    }

    #[test]
    fn score_formula() {
        let p = panel_two_days(&[0.1, 0.2], &[0.3, 0.1]);
        let s = factor_score(&p, 1, 2).unwrap();
        assert!((s[0].unwrap() + 0.10).abs() < 1e-15);
        assert!((s[1].unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn equal_factors_score_zero() {
        let p = panel_two_days(&[0.3, 0.7, 0.1], &[0.3, 0.7, 0.1]);
        let s = factor_score(&p, 1, 3).unwrap();
        assert!(s.iter().all(|v| *v == Some(0.0)));
        // ties fall back to asset id order
        let w = select_weights(&s, p.asset_ids(), 1, 1).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.5, 0.0, -0.5]);
    }

    #[test]
    fn score_needs_enough_assets() {
        let mut p = panel_two_days(&[0.1, 0.2, 0.3], &[0.1, 0.1, 0.1]);
        p.ep_ratio[0][1] = None;
        let s = factor_score(&p, 1, 2).unwrap();
        assert_eq!(s[1], None);
        assert!(matches!(
            factor_score(&p, 1, 3),
            Err(Error::InsufficientUniverse { available: 2, required: 3 })
        ));
        assert!(factor_score(&p, 0, 1).is_err());
    }

    #[test]
    fn select_rank_example() {
        let w = select_weights(&[Some(3.0), Some(2.0), Some(1.0)], &ids(3), 1, 1).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.5, 0.0, -0.5]);
        assert!(select_weights(&[Some(3.0), None], &ids(2), 1, 1).is_err());
    }

    #[test]
    fn forty_distinct_scores() {
        let scores: Vec<Option<f64>> = (0..40).map(|i| Some(i as f64)).collect();
        let w = select_weights(&scores, &ids(40), 20, 20).unwrap();
        assert_eq!(w.cash(), 0.0);
        assert_eq!(w.risky().iter().filter(|&&v| v == 1.0 / 40.0).count(), 20);
        assert_eq!(w.risky().iter().filter(|&&v| v == -1.0 / 40.0).count(), 20);
        // highest scores are long
        assert!(w.risky()[20..].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn csv_round_trip_with_missing() {
        let csv = "date,asset,ep_ratio,turnover\n2010-01-05,B,0.2,\n2010-01-04,A,0.1,0.3\n2010-01-04,B,0.2,0.1\n";
        let p = FactorPanel::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(p.asset_ids(), &["A".to_string(), "B".to_string()]);
        assert_eq!(p.dates().len(), 2);
        assert_eq!(p.turnover(1, 1), None);
        assert_eq!(p.ep_ratio(1, 0), None);
        let back = FactorPanel::read_csv(p.to_csv().as_bytes()).unwrap();
        assert_eq!(back, p);
        let dup = "date,asset,ep_ratio,turnover\n2010-01-04,A,1,1\n2010-01-04,A,1,1\n";
        assert!(FactorPanel::read_csv(dup.as_bytes()).is_err());
    }

    #[test]
    fn flat_market_has_zero_returns() {
        let market = drifting_market(&[0.0; 5], 30);
        let panel = crate::synthetic::random_factor_panel(&market, 4);
        let report = run_factor_backtest(
            &market,
            &panel,
            DayRange::new(1, 29).unwrap(),
            FactorStrategy { long_n: 2, short_n: 2 },
        )
        .unwrap();
        assert!(report.log_returns.iter().all(|&r| r == 0.0));
        assert!(report.costs.iter().all(|&c| c == 0.0));
    }
}
