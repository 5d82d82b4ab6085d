//! Signed-weight portfolio calculus.
//!
//! A weight vector has `m + 1` entries: cash first, then the risky assets with
//! the benchmark in the last slot. Weights are signed (negative means short)
//! and their absolute values sum to one. Cash can never be short.

use crate::error::{Error, Result};

/// Tolerance on `Σ|w| = 1` accepted by [`WeightVector::new`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates `Σ|w| = 1`, `w[0] ∈ [0, 1]` and every entry in `[-1, 1]`.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::InvalidWeights(format!(
                "need cash plus at least one asset, got {} entries",
                w.len()
            )));
        }
        if w.iter().any(|x| !x.is_finite() || x.abs() > 1.0 + WEIGHT_SUM_TOL) {
            return Err(Error::InvalidWeights(format!("entry outside [-1, 1]: {w:?}")));
        }
        if w[0] < 0.0 {
            return Err(Error::InvalidWeights(format!("short cash weight {}", w[0])));
        }
        let total = abs_sum(&w);
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("absolute sum {total} != 1")));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of risky assets `m`.
    pub fn num_assets(&self) -> usize {
        self.0.len() - 1
    }

    pub fn cash(&self) -> f64 {
        self.0[0]
    }

    pub fn risky(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn benchmark(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-asset leverage ratios, cash included. All entries positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LeverageVector(Vec<f64>);

impl LeverageVector {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Domain(format!("leverage ratios must be positive: {lambda:?}")));
        }
        Ok(Self(lambda))
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_unit(&self) -> bool {
        self.0.iter().all(|&l| l == 1.0)
    }
}

/// Portfolio value together with the post-trade weights on day `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState {
    pub value: f64,
    pub weights: WeightVector,
    pub t: usize,
}

/// `Σ|w|`.
pub fn abs_sum(w: &[f64]) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

/// Clamps cash at zero and divides by the absolute sum.
pub fn normalize_signed(raw: &[f64]) -> Result<WeightVector> {
    if raw.len() < 2 {
        return Err(Error::InvalidWeights(format!("need at least 2 entries, got {}", raw.len())));
    }
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite action {raw:?}")));
    }
    let mut w = raw.to_vec();
    w[0] = w[0].max(0.0);
    let total = abs_sum(&w);
    if total == 0.0 {
        return Err(Error::DegenerateAction);
    }
    for x in &mut w {
        *x /= total;
    }
    Ok(WeightVector(w))
}

/// All cash: `(1, 0, ..., 0)` for `m` risky assets.
pub fn initial_weights(m: usize) -> WeightVector {
    assert!(m >= 1, "portfolio needs at least one risky asset");
    let mut w = vec![0.0; m + 1];
    w[0] = 1.0;
    WeightVector(w)
}

/// Weight of a short position worth `short_value` next to other positions
/// whose absolute values sum to `other_values_abs_sum`.
pub fn shorted_weight(short_value: f64, other_values_abs_sum: f64) -> Result<f64> {
    if !(short_value > 0.0) || other_values_abs_sum < 0.0 {
        return Err(Error::Domain(format!(
            "short value {short_value} must be positive and other values {other_values_abs_sum} nonnegative"
        )));
    }
    let denom = other_values_abs_sum + short_value;
    if denom == 0.0 {
        return Err(Error::DegenerateAction);
    }
    Ok(-short_value / denom)
}

/// Flips the benchmark's sign when it points the same way as every other
/// nonzero risky position. Benchmark-only and benchmark-free portfolios pass
/// through unchanged.
pub fn enforce_arbitrage(w: &WeightVector) -> WeightVector {
    let mut out = w.clone();
    if arbitrage_flip_needed(w.as_slice()) {
        let last = out.0.len() - 1;
        out.0[last] = -out.0[last];
    }
    out
}

/// True when [`enforce_arbitrage`] would flip the benchmark weight.
pub fn arbitrage_flip_needed(w: &[f64]) -> bool {
    let bench = w[w.len() - 1];
    let others = &w[1..w.len() - 1];
    if bench == 0.0 || others.iter().all(|&x| x == 0.0) {
        return false;
    }
    let positive = bench > 0.0;
    others
        .iter()
        .filter(|&&x| x != 0.0)
        .all(|&x| (x > 0.0) == positive)
}

/// Whether `w` satisfies the post-arbitrage sign condition: whenever the
/// benchmark and some other risky asset are both held, the risky weights do
/// not all share a sign.
pub fn satisfies_arbitrage(w: &[f64]) -> bool {
    !arbitrage_flip_needed(w)
}

fn check_relatives(y: &[f64], expected_len: usize) -> Result<()> {
    if y.len() != expected_len {
        return Err(Error::Shape(format!(
            "price relatives have length {}, weights {}",
            y.len(),
            expected_len
        )));
    }
    if let Some(bad) = y.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!("price relative {bad} is not positive")));
    }
    Ok(())
}

/// Passive drift of the weights over one price move.
pub fn evolve_weights(w_prev: &WeightVector, y: &[f64]) -> Result<WeightVector> {
    check_relatives(y, w_prev.len())?;
    let denom: f64 = y.iter().zip(&w_prev.0).map(|(yi, wi)| yi * wi.abs()).sum();
    Ok(WeightVector(
        y.iter().zip(&w_prev.0).map(|(yi, wi)| yi * wi / denom).collect(),
    ))
}

/// Cost rate of rebalancing from `w_drifted` to `w_target`; cash is free.
pub fn transaction_cost(w_drifted: &WeightVector, w_target: &WeightVector, mu: f64) -> Result<f64> {
    if w_drifted.len() != w_target.len() {
        return Err(Error::Shape(format!(
            "weight lengths differ: {} vs {}",
            w_drifted.len(),
            w_target.len()
        )));
    }
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("cost rate {mu} is negative")));
    }
    let turnover: f64 = w_drifted.0[1..]
        .iter()
        .zip(&w_target.0[1..])
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(mu * turnover)
}

fn check_leverage(leverage: &LeverageVector, len: usize) -> Result<()> {
    if leverage.0.len() != len {
        return Err(Error::Shape(format!(
            "leverage has length {}, weights {}",
            leverage.0.len(),
            len
        )));
    }
    Ok(())
}

/// Log growth `(ln y) · w` of the portfolio over one price move, before costs.
pub fn log_growth(w_prev: &WeightVector, y: &[f64]) -> Result<f64> {
    check_relatives(y, w_prev.len())?;
    Ok(y.iter().zip(&w_prev.0).map(|(yi, wi)| yi.ln() * wi).sum())
}

/// Leveraged log growth `Σ λᵢ (ln yᵢ) wᵢ`.
pub fn simple_return(w_prev: &WeightVector, y: &[f64], leverage: &LeverageVector) -> Result<f64> {
    check_relatives(y, w_prev.len())?;
    check_leverage(leverage, w_prev.len())?;
    Ok(y
        .iter()
        .zip(&w_prev.0)
        .zip(&leverage.0)
        .map(|((yi, wi), li)| li * yi.ln() * wi)
        .sum())
}

/// One day's value update. Returns the new value and the day's log return.
pub fn step_value(
    rho_prev: f64,
    w_prev: &WeightVector,
    y: &[f64],
    cost: f64,
    leverage: &LeverageVector,
) -> Result<(f64, f64)> {
    if !(rho_prev > 0.0) {
        return Err(Error::Domain(format!("portfolio value {rho_prev} is not positive")));
    }
    if cost >= 1.0 {
        return Err(Error::Ruin(cost));
    }
    if !(cost >= 0.0) {
        return Err(Error::Domain(format!("cost {cost} is negative")));
    }
    let growth = simple_return(w_prev, y, leverage)?;
    let rho = rho_prev * (1.0 - cost) * growth.exp();
    let gamma = (1.0 - cost).ln() + growth;
    Ok((rho, gamma))
}

/// Value update without leverage: `ρ (1 - C) exp[(ln y) · w]`.
pub fn step_value_unlevered(rho_prev: f64, w_prev: &WeightVector, y: &[f64], cost: f64) -> Result<f64> {
    if cost >= 1.0 {
        return Err(Error::Ruin(cost));
    }
    Ok(rho_prev * (1.0 - cost) * log_growth(w_prev, y)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(v: &[f64]) -> WeightVector {
        WeightVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_signed(&[1.0, -1.0]).unwrap().as_slice(), &[0.5, -0.5]);
        assert_eq!(normalize_signed(&[2.0, 0.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert!(matches!(normalize_signed(&[0.0, 0.0, 0.0]), Err(Error::DegenerateAction)));
        // cash clamp can leave nothing to normalize
        assert!(matches!(normalize_signed(&[-3.0, 0.0]), Err(Error::DegenerateAction)));
        assert_eq!(normalize_signed(&[-1.0, 1.0, -1.0]).unwrap().as_slice(), &[0.0, 0.5, -0.5]);
    }

    #[test]
    fn weight_vector_rejects_invalid() {
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.4]).is_err());
        assert!(WeightVector::new(vec![1.0]).is_err());
        assert!(WeightVector::new(vec![0.3, -0.7]).is_ok());
    }

    #[test]
    fn initial_weights_are_all_cash() {
        assert_eq!(initial_weights(1).as_slice(), &[1.0, 0.0]);
        assert_eq!(initial_weights(5).as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(abs_sum(initial_weights(5).as_slice()), 1.0);
    }

    #[test]
    fn shorted_weight_examples() {
        assert_eq!(shorted_weight(300_000.0, 700_000.0).unwrap(), -0.3);
        assert_eq!(shorted_weight(12.5, 0.0).unwrap(), -1.0);
        assert_eq!(shorted_weight(250_000.0, 750_000.0).unwrap(), -0.25);
        assert!(shorted_weight(0.0, 0.0).is_err());
    }

    #[test]
    fn arbitrage_examples() {
        assert_eq!(enforce_arbitrage(&wv(&[0.2, 0.3, 0.5])).as_slice(), &[0.2, 0.3, -0.5]);
        assert_eq!(enforce_arbitrage(&wv(&[0.2, 0.3, -0.5])).as_slice(), &[0.2, 0.3, -0.5]);
        assert_eq!(enforce_arbitrage(&wv(&[0.0, 0.0, 1.0])).as_slice(), &[0.0, 0.0, 1.0]);
        assert_eq!(enforce_arbitrage(&wv(&[0.5, -0.5, 0.0])).as_slice(), &[0.5, -0.5, 0.0]);
        assert_eq!(
            enforce_arbitrage(&wv(&[0.0, -0.25, 0.0, -0.25, -0.5])).as_slice(),
            &[0.0, -0.25, 0.0, -0.25, 0.5]
        );
        // single risky asset is the benchmark itself
        assert_eq!(enforce_arbitrage(&wv(&[0.0, 1.0])).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn evolve_examples() {
        let w = evolve_weights(&wv(&[0.5, 0.5]), &[1.0, 1.1]).unwrap();
        assert!((w[0] - 0.5 / 1.05).abs() < 1e-15);
        assert!((w[1] - 0.55 / 1.05).abs() < 1e-15);
        assert!((w[0] - 0.476_190_476_190_476).abs() < 1e-12);

        let w = evolve_weights(&wv(&[0.2, -0.8]), &[1.0, 0.9]).unwrap();
        assert!((w[0] - 0.217_391_304_347_826).abs() < 1e-12);
        assert!((w[1] + 0.782_608_695_652_174).abs() < 1e-12);

        let w0 = wv(&[0.1, -0.3, 0.6]);
        assert_eq!(evolve_weights(&w0, &[1.0, 1.0, 1.0]).unwrap(), w0);
        assert!(evolve_weights(&w0, &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn cost_examples() {
        let mu = 0.0025;
        let c = transaction_cost(&initial_weights(3), &wv(&[0.0, 0.2, -0.3, 0.5]), mu).unwrap();
        assert!((c - 0.0025).abs() < 1e-15);
        let w = wv(&[0.2, 0.3, 0.5]);
        assert_eq!(transaction_cost(&w, &w, mu).unwrap(), 0.0);
        let c = transaction_cost(&wv(&[0.4762, 0.5238]), &wv(&[0.5, 0.5]), mu).unwrap();
        assert!((c - 0.0025 * 0.0238).abs() < 1e-15);
        assert!((c - 5.95e-5).abs() < 1e-12);
    }

    #[test]
    fn step_value_examples() {
        let ones = LeverageVector::ones(2);
        let (rho, g) = step_value(1.0, &wv(&[0.0, 1.0]), &[1.0, 0.01f64.exp()], 0.0, &ones).unwrap();
        assert!((rho - 1.010_050_167_084_168).abs() < 1e-12);
        assert!((g - 0.01).abs() < 1e-15);

        let (_, g) = step_value(1.0, &wv(&[0.0, -1.0]), &[1.0, 0.9], 0.0, &ones).unwrap();
        assert!((g - 0.105_360_515_657_826_3).abs() < 1e-12);
        assert!(g > 0.0);

        let (rho, g) = step_value(2.5, &wv(&[0.3, -0.7]), &[1.0, 1.0], 0.0, &ones).unwrap();
        assert_eq!((rho, g), (2.5, 0.0));

        assert!(matches!(
            step_value(1.0, &wv(&[0.0, 1.0]), &[1.0, 1.0], 1.0, &ones),
            Err(Error::Ruin(_))
        ));
    }

    #[test]
    fn leverage_scales_log_growth() {
        let w = wv(&[0.0, 0.5, -0.5]);
        let y = [1.0, 1.1, 0.95];
        let lev = LeverageVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let r = simple_return(&w, &y, &lev).unwrap();
        let expected = 2.0 * 1.1f64.ln() * 0.5 + 3.0 * 0.95f64.ln() * -0.5;
        assert!((r - expected).abs() < 1e-15);
        assert!(LeverageVector::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn simple_return_cancellations() {
        let ones = LeverageVector::ones(3);
        let r = simple_return(&wv(&[0.0, 0.5, 0.5]), &[1.0, 0.02f64.exp(), (-0.02f64).exp()], &ones).unwrap();
        assert!(r.abs() < 1e-15);

        let mut w = vec![0.0];
        w.extend(std::iter::repeat_n(1.0 / 40.0, 20));
        w.extend(std::iter::repeat_n(-1.0 / 40.0, 20));
        let y = vec![0.01f64.exp(); 41];
        let mut y = y;
        y[0] = 1.0;
        let r = simple_return(&wv(&w), &y, &LeverageVector::ones(41)).unwrap();
        assert!(r.abs() < 1e-15);
    }
}
