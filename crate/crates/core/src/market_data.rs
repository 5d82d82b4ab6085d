//! Daily OHLC ingest, date alignment, and the normalized price tensor.
//!
//! Prices of zero mark missing values. They are stored as-is and replaced by
//! a neutral ratio of one whenever a ratio is formed, so a missing day looks
//! like a flat, untradeable day to everything downstream.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Number of price features in the tensor: close, high, low, open.
pub const NUM_FEATURES: usize = 4;

/// Feature order inside a [`PriceTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Close = 0,
    High = 1,
    Low = 2,
    Open = 3,
}

/// One asset's daily OHLC history.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub asset_id: String,
    pub dates: Vec<NaiveDate>,
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub close: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        asset_id: impl Into<String>,
        dates: Vec<NaiveDate>,
        open: Vec<f64>,
        high: Vec<f64>,
        low: Vec<f64>,
        close: Vec<f64>,
    ) -> Result<Self> {
        let series = Self {
            asset_id: asset_id.into(),
            dates,
            open,
            high,
            low,
            close,
        };
        series.validate()?;
        Ok(series)
    }

    fn validate(&self) -> Result<()> {
        let n = self.dates.len();
        if [&self.open, &self.high, &self.low, &self.close]
            .iter()
            .any(|v| v.len() != n)
        {
            return Err(Error::Format(format!(
                "{}: price columns differ in length from the date axis",
                self.asset_id
            )));
        }
        for w in self.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Format(format!(
                    "{}: dates not strictly increasing at {}",
                    self.asset_id, w[1]
                )));
            }
        }
        for k in 0..n {
            let (o, h, l, c) = (self.open[k], self.high[k], self.low[k], self.close[k]);
            if [o, h, l, c].iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Format(format!(
                    "{}: invalid price on {}",
                    self.asset_id, self.dates[k]
                )));
            }
            let complete = o > 0.0 && h > 0.0 && l > 0.0 && c > 0.0;
            if complete && !(l <= o && o <= h && l <= c && c <= h) {
                return Err(Error::Format(format!(
                    "{}: inconsistent OHLC on {} (low {l}, open {o}, high {h}, close {c})",
                    self.asset_id, self.dates[k]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Count of days where at least one of the four prices is missing.
    pub fn missing_days(&self) -> usize {
        (0..self.len())
            .filter(|&k| {
                self.open[k] == 0.0 || self.high[k] == 0.0 || self.low[k] == 0.0 || self.close[k] == 0.0
            })
            .count()
    }

    fn feature(&self, f: Feature) -> &[f64] {
        match f {
            Feature::Close => &self.close,
            Feature::High => &self.high,
            Feature::Low => &self.low,
            Feature::Open => &self.open,
        }
    }

    fn restrict(&self, keep: &BTreeSet<NaiveDate>) -> PriceSeries {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| keep.contains(&self.dates[k]))
            .collect();
        let pick = |v: &[f64]| idx.iter().map(|&k| v[k]).collect::<Vec<_>>();
        PriceSeries {
            asset_id: self.asset_id.clone(),
            dates: idx.iter().map(|&k| self.dates[k]).collect(),
            open: pick(&self.open),
            high: pick(&self.high),
            low: pick(&self.low),
            close: pick(&self.close),
        }
    }
}

fn parse_price(cell: Option<&str>) -> f64 {
    match cell.map(str::trim).and_then(|s| s.parse::<f64>().ok()) {
        Some(p) if p.is_finite() && p >= 0.0 => p,
        _ => 0.0,
    }
}

/// Parses a `date,open,high,low,close` CSV. The asset id is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let asset_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(asset_id, file)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv(asset_id: impl Into<String>, reader: impl std::io::Read) -> Result<PriceSeries> {
    let asset_id = asset_id.into();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("{asset_id}: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Format(format!("{asset_id}: missing column `{name}`")))
    };
    let (cd, co, ch, cl, cc) = (col("date")?, col("open")?, col("high")?, col("low")?, col("close")?);

    let mut rows: Vec<(NaiveDate, [f64; 4])> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format(format!("{asset_id}: {e}")))?;
        let raw_date = record.get(cd).unwrap_or("").trim();
        if raw_date.is_empty() && record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| Error::Format(format!("{asset_id}: bad date `{raw_date}`")))?;
        rows.push((
            date,
            [
                parse_price(record.get(co)),
                parse_price(record.get(ch)),
                parse_price(record.get(cl)),
                parse_price(record.get(cc)),
            ],
        ));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Format(format!("{asset_id}: duplicate date {}", w[0].0)));
    }

    PriceSeries::new(
        asset_id,
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1[0]).collect(),
        rows.iter().map(|r| r.1[1]).collect(),
        rows.iter().map(|r| r.1[2]).collect(),
        rows.iter().map(|r| r.1[3]).collect(),
    )
}

/// Assets on a shared date axis, benchmark last.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedMarket {
    assets: Vec<PriceSeries>,
    benchmark_index: usize,
}

impl AlignedMarket {
    /// Number of risky assets `m` (the benchmark included).
    pub fn num_assets(&self) -> usize {
        self.assets.len()
    }

    /// Number of trading days on the shared axis.
    pub fn len(&self) -> usize {
        self.assets[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn assets(&self) -> &[PriceSeries] {
        &self.assets
    }

    pub fn asset_ids(&self) -> Vec<&str> {
        self.assets.iter().map(|a| a.asset_id.as_str()).collect()
    }

    pub fn benchmark_index(&self) -> usize {
        self.benchmark_index
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.assets[0].dates
    }

    pub fn close(&self, asset: usize, t: usize) -> f64 {
        self.assets[asset].close[t]
    }

    /// Index of `date` on the shared axis.
    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates().binary_search(&date).ok()
    }

    /// First index on or after `date`.
    pub fn index_on_or_after(&self, date: NaiveDate) -> Option<usize> {
        let i = self.dates().partition_point(|d| *d < date);
        (i < self.len()).then_some(i)
    }

    /// Last index on or before `date`.
    pub fn index_on_or_before(&self, date: NaiveDate) -> Option<usize> {
        self.dates().partition_point(|d| *d <= date).checked_sub(1)
    }

    /// Keeps days `start..=end` of the shared axis.
    pub fn slice(&self, start: usize, end: usize) -> Result<AlignedMarket> {
        if start > end || end >= self.len() {
            return Err(Error::OutOfRange { t: end, len: self.len() });
        }
        let keep: BTreeSet<NaiveDate> = self.dates()[start..=end].iter().copied().collect();
        Ok(AlignedMarket {
            assets: self.assets.iter().map(|a| a.restrict(&keep)).collect(),
            benchmark_index: self.benchmark_index,
        })
    }
}

/// Restricts `series` to their common dates and moves `benchmark` to the last slot.
pub fn align(series: Vec<PriceSeries>, benchmark: &str) -> Result<AlignedMarket> {
    if series.len() < 2 {
        return Err(Error::Alignment(format!(
            "need at least two series, got {}",
            series.len()
        )));
    }
    let mut seen = HashSet::new();
    for s in &series {
        if !seen.insert(s.asset_id.as_str()) {
            return Err(Error::Alignment(format!("duplicate asset id `{}`", s.asset_id)));
        }
    }
    let bench_pos = series
        .iter()
        .position(|s| s.asset_id == benchmark)
        .ok_or_else(|| Error::Alignment(format!("benchmark `{benchmark}` not among the series")))?;

    let mut common: BTreeSet<NaiveDate> = series[0].dates.iter().copied().collect();
    for s in &series[1..] {
        let other: BTreeSet<NaiveDate> = s.dates.iter().copied().collect();
        common = common.intersection(&other).copied().collect();
    }
    if common.is_empty() {
        let names: Vec<&str> = series.iter().map(|s| s.asset_id.as_str()).collect();
        return Err(Error::Alignment(format!(
            "no common trading days across {}",
            names.join(", ")
        )));
    }

    let mut assets: Vec<PriceSeries> = Vec::with_capacity(series.len());
    let mut bench = None;
    for (i, s) in series.iter().enumerate() {
        let r = s.restrict(&common);
        if i == bench_pos {
            bench = Some(r);
        } else {
            assets.push(r);
        }
    }
    assets.extend(bench);
    let benchmark_index = assets.len() - 1;
    Ok(AlignedMarket {
        assets,
        benchmark_index,
    })
}

/// The `(feature, asset, window-step)` block of price ratios describing day `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTensor {
    data: Vec<f64>,
    num_assets: usize,
    window: usize,
    t: usize,
}

impl PriceTensor {
    /// Wraps `data` laid out as `(feature, asset, step)` for day `t`.
    pub fn from_parts(data: Vec<f64>, num_assets: usize, window: usize, t: usize) -> Result<Self> {
        if data.len() != NUM_FEATURES * num_assets * window {
            return Err(Error::Shape(format!(
                "{} values cannot fill a ({NUM_FEATURES}, {num_assets}, {window}) tensor",
                data.len()
            )));
        }
        Ok(Self {
            data,
            num_assets,
            window,
            t,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn num_assets(&self) -> usize {
        self.num_assets
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn shape(&self) -> [usize; 3] {
        [NUM_FEATURES, self.num_assets, self.window]
    }

    pub fn get(&self, feature: usize, asset: usize, step: usize) -> f64 {
        self.data[(feature * self.num_assets + asset) * self.window + step]
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 || den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Builds the normalized tensor for day `t` over the `n` days ending at `t`.
///
/// Entry `(f, i, k)` is feature `f` of asset `i` on day `t - n + 1 + k`,
/// divided by the close of asset `i` on day `t`.
pub fn price_tensor(market: &AlignedMarket, t: usize, n: usize) -> Result<PriceTensor> {
    if t >= market.len() {
        return Err(Error::OutOfRange { t, len: market.len() });
    }
    if n == 0 || t + 1 < n {
        return Err(Error::Window { t, needed: n });
    }
    let m = market.num_assets();
    let start = t + 1 - n;
    let mut data = Vec::with_capacity(NUM_FEATURES * m * n);
    for f in [Feature::Close, Feature::High, Feature::Low, Feature::Open] {
        for asset in &market.assets {
            let base = asset.close[t];
            let prices = asset.feature(f);
            data.extend(prices[start..=t].iter().map(|&p| ratio(p, base)));
        }
    }
    Ok(PriceTensor {
        data,
        num_assets: m,
        window: n,
        t,
    })
}

/// Price relatives from day `t - 1` to day `t`, cash first.
pub fn relative_prices(market: &AlignedMarket, t: usize) -> Result<Vec<f64>> {
    if t == 0 || t >= market.len() {
        return Err(Error::OutOfRange { t, len: market.len() });
    }
    let mut y = Vec::with_capacity(market.num_assets() + 1);
    y.push(1.0);
    y.extend(
        market
            .assets
            .iter()
            .map(|a| ratio(a.close[t], a.close[t - 1])),
    );
    Ok(y)
}
