//! Synthetic markets and factor panels for tests, demos and smoke training.

use std::path::Path;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::baseline_factor::FactorPanel;
use crate::error::{Error, Result};
use crate::market_data::{align, AlignedMarket, PriceSeries};

pub const BENCHMARK_ID: &str = "IDX";

/// Consecutive business days starting 2010-01-04.
pub fn business_days(len: usize) -> Vec<NaiveDate> {
    use chrono::Datelike;
    let mut d = NaiveDate::from_ymd_opt(2010, 1, 4).unwrap();
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        if d.weekday().num_days_from_monday() < 5 {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

fn series_from_closes(id: &str, dates: &[NaiveDate], closes: &[f64]) -> PriceSeries {
    let open: Vec<f64> = closes
        .iter()
        .enumerate()
        .map(|(k, &c)| if k == 0 { c } else { closes[k - 1] })
        .collect();
    let high: Vec<f64> = open.iter().zip(closes).map(|(o, c)| o.max(*c) * 1.001).collect();
    let low: Vec<f64> = open.iter().zip(closes).map(|(o, c)| o.min(*c) * 0.999).collect();
    PriceSeries::new(id, dates.to_vec(), open, high, low, closes.to_vec())
        .expect("synthetic series are consistent")
}

fn asset_id(i: usize, m: usize) -> String {
    if i + 1 == m {
        BENCHMARK_ID.to_string()
    } else {
        format!("S{i:02}")
    }
}

/// Assets whose closes grow by `exp(drift)` per day; the last one is the benchmark.
pub fn drifting_market(log_drifts: &[f64], len: usize) -> AlignedMarket {
    let dates = business_days(len);
    let m = log_drifts.len();
    let series = log_drifts
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let closes: Vec<f64> = (0..len).map(|k| 100.0 * (d * k as f64).exp()).collect();
            series_from_closes(&asset_id(i, m), &dates, &closes)
        })
        .collect();
    align(series, BENCHMARK_ID).expect("synthetic market aligns")
}

/// Geometric random walks with per-asset log drift and common volatility.
pub fn random_market(log_drifts: &[f64], volatility: f64, len: usize, seed: u64) -> AlignedMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, volatility).expect("volatility is finite and nonnegative");
    let dates = business_days(len);
    let m = log_drifts.len();
    let series = log_drifts
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut price = 50.0 + 10.0 * i as f64;
            let closes: Vec<f64> = (0..len)
                .map(|k| {
                    if k > 0 {
                        price *= (d + noise.sample(&mut rng)).exp();
                    }
                    price
                })
                .collect();
            series_from_closes(&asset_id(i, m), &dates, &closes)
        })
        .collect();
    align(series, BENCHMARK_ID).expect("synthetic market aligns")
}

/// Factor panel with random EP ratios and turnovers for every non-benchmark asset.
pub fn random_factor_panel(market: &AlignedMarket, seed: u64) -> FactorPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ep = Normal::new(0.05, 0.02).unwrap();
    let turnover = Normal::new(0.02, 0.01).unwrap();
    let ids: Vec<String> = market.asset_ids()[..market.num_assets() - 1]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let days = market.len();
    let eps = (0..days)
        .map(|_| ids.iter().map(|_| Some(ep.sample(&mut rng))).collect())
        .collect();
    let tos = (0..days)
        .map(|_| ids.iter().map(|_| Some(f64::abs(turnover.sample(&mut rng)))).collect())
        .collect();
    FactorPanel::new(market.dates().to_vec(), ids, eps, tos).expect("shape matches")
}

/// Writes one `date,open,high,low,close` CSV per asset into `dir`.
pub fn write_market_csvs(market: &AlignedMarket, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for asset in market.assets() {
        let path = dir.join(format!("{}.csv", asset.asset_id));
        let mut out = String::from("date,open,high,low,close\n");
        for k in 0..asset.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                asset.dates[k], asset.open[k], asset.high[k], asset.low[k], asset.close[k]
            ));
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
