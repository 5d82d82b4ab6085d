//! The daily trading process as a Markov decision process.
//!
//! Each step the agent assigns new weights on day `t`, pays the rebalancing
//! cost against the weights that drifted in since the last trade, and earns
//! the log return of those weights over the move from `t` to `t + 1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::market_data::{price_tensor, relative_prices, AlignedMarket, PriceTensor};
use crate::portfolio_math::{
    enforce_arbitrage, evolve_weights, initial_weights, normalize_signed, satisfies_arbitrage,
    step_value, transaction_cost, LeverageVector, WeightVector, WEIGHT_SUM_TOL,
};

pub const DEFAULT_WINDOW: usize = 50;
pub const DEFAULT_EPISODE_LEN: usize = 252;
pub const DEFAULT_MU: f64 = 0.0025;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub window: usize,
    pub episode_len: usize,
    pub mu: f64,
    /// `None` means unit leverage for every asset.
    pub leverage: Option<LeverageVector>,
    pub arbitrage_enabled: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            episode_len: DEFAULT_EPISODE_LEN,
            mu: DEFAULT_MU,
            leverage: None,
            arbitrage_enabled: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config(format!("window must be >= 2, got {}", self.window)));
        }
        if self.episode_len < 1 {
            return Err(Error::Config("episode_len must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::Config(format!("mu must lie in [0, 1), got {}", self.mu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Observation `X_t`.
    pub tensor: PriceTensor,
    /// Weights held going into day `t`.
    pub weights: WeightVector,
    /// Drifted weights the next trade is costed against.
    pub drifted: WeightVector,
    pub value: f64,
    pub t: usize,
    pub steps_done: usize,
    pub episode_len: usize,
}

impl EnvState {
    pub fn done(&self) -> bool {
        self.steps_done >= self.episode_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    /// Executed weights after normalization and the arbitrage rule.
    pub action: WeightVector,
    /// Daily log return net of cost.
    pub reward: f64,
    /// Cost rate paid on this step.
    pub cost: f64,
    pub next_state: EnvState,
    pub done: bool,
}

/// Environment over a shared, read-only market.
#[derive(Debug, Clone)]
pub struct TradingEnv<'a> {
    market: &'a AlignedMarket,
    config: EnvConfig,
    leverage: LeverageVector,
}

impl<'a> TradingEnv<'a> {
    pub fn new(market: &'a AlignedMarket, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let width = market.num_assets() + 1;
        let leverage = match &config.leverage {
            Some(l) if l.as_slice().len() != width => {
                return Err(Error::Config(format!(
                    "leverage vector has {} entries, portfolio has {width}",
                    l.as_slice().len()
                )))
            }
            Some(l) => l.clone(),
            None => LeverageVector::ones(width),
        };
        Ok(Self {
            market,
            config,
            leverage,
        })
    }

    pub fn market(&self) -> &AlignedMarket {
        self.market
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Earliest episode start: the first day with a full window behind it.
    pub fn min_start(&self) -> usize {
        self.config.window
    }

    /// Latest start leaving `episode_len` price moves ahead.
    pub fn max_start(&self) -> Result<usize> {
        let need = self.config.window + self.config.episode_len + 1;
        if self.market.len() < need {
            return Err(Error::Config(format!(
                "market has {} days, an episode needs at least {need}",
                self.market.len()
            )));
        }
        Ok(self.market.len() - 1 - self.config.episode_len)
    }

    /// Starts an episode at a uniformly drawn day.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EnvState> {
        let hi = self.max_start()?;
        let t0 = rng.random_range(self.min_start()..=hi);
        self.reset_at(t0, self.config.episode_len)
    }

    /// Starts an episode of `len` steps at day `t0` with all-cash weights.
    pub fn reset_at(&self, t0: usize, len: usize) -> Result<EnvState> {
        if t0 + len >= self.market.len() {
            return Err(Error::OutOfRange {
                t: t0 + len,
                len: self.market.len(),
            });
        }
        let w0 = initial_weights(self.market.num_assets());
        Ok(EnvState {
            tensor: price_tensor(self.market, t0, self.config.window)?,
            weights: w0.clone(),
            drifted: w0,
            value: 1.0,
            t: t0,
            steps_done: 0,
            episode_len: len,
        })
    }

    /// Turns an action into the executed weights.
    pub fn constrain_action(&self, action_raw: &[f64]) -> Result<WeightVector> {
        let width = self.market.num_assets() + 1;
        if action_raw.len() != width {
            return Err(Error::Shape(format!(
                "action has {} entries, portfolio has {width}",
                action_raw.len()
            )));
        }
        let w = match normalize_signed(action_raw) {
            Ok(w) => w,
            Err(Error::DegenerateAction) => initial_weights(self.market.num_assets()),
            Err(e) => return Err(e),
        };
        Ok(if self.config.arbitrage_enabled {
            enforce_arbitrage(&w)
        } else {
            w
        })
    }

    pub fn step(&self, state: &EnvState, action_raw: &[f64]) -> Result<(Transition, EnvState)> {
        if state.done() {
            return Err(Error::Protocol(format!(
                "episode finished after {} steps",
                state.steps_done
            )));
        }
        let target = self.constrain_action(action_raw)?;
        debug_assert!(
            (target.as_slice().iter().map(|x| x.abs()).sum::<f64>() - 1.0).abs() <= WEIGHT_SUM_TOL
                && target.cash() >= 0.0
                && (!self.config.arbitrage_enabled || satisfies_arbitrage(target.as_slice())),
            "constrained action violates weight invariants: {target:?}"
        );

        let t = state.t;
        let y = relative_prices(self.market, t + 1)?;
        let drifted_next = evolve_weights(&target, &y)?;
        let cost = transaction_cost(&state.drifted, &target, self.config.mu)?;
        let (value, reward) = step_value(state.value, &target, &y, cost, &self.leverage)?;

        let steps_done = state.steps_done + 1;
        let next = EnvState {
            tensor: price_tensor(self.market, t + 1, self.config.window)?,
            weights: target.clone(),
            drifted: drifted_next,
            value,
            t: t + 1,
            steps_done,
            episode_len: state.episode_len,
        };
        let done = next.done();
        let transition = Transition {
            state: state.clone(),
            action: target,
            reward,
            cost,
            next_state: next.clone(),
            done,
        };
        Ok((transition, next))
    }
}

/// Arithmetic mean of the rewards along a trajectory.
pub fn average_reward(trajectory: &[Transition]) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::Domain("average reward of an empty trajectory".into()));
    }
    Ok(trajectory.iter().map(|tr| tr.reward).sum::<f64>() / trajectory.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::drifting_market;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_valid_start_when_market_is_minimal() {
        let cfg = EnvConfig {
            window: 5,
            episode_len: 10,
            ..EnvConfig::default()
        };
        let market = drifting_market(&[0.0, 0.01], 16);
        let env = TradingEnv::new(&market, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(env.reset(&mut rng).unwrap().t, 5);
        }
        let short = drifting_market(&[0.0, 0.01], 15);
        let env = TradingEnv::new(&short, env.config().clone()).unwrap();
        assert!(matches!(env.reset(&mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_start() {
        let market = drifting_market(&[0.0, 0.01], 400);
        let env = TradingEnv::new(&market, EnvConfig::default()).unwrap();
        let a = env.reset(&mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = env.reset(&mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.t, b.t);
    }

    #[test]
    fn all_cash_keeps_value() {
        let market = drifting_market(&[0.02, -0.01], 120);
        let cfg = EnvConfig {
            window: 10,
            episode_len: 50,
            mu: 0.0,
            ..EnvConfig::default()
        };
        let env = TradingEnv::new(&market, cfg).unwrap();
        let mut s = env.reset_at(10, 50).unwrap();
        while !s.done() {
            let (tr, next) = env.step(&s, &[1.0, 0.0, 0.0]).unwrap();
            assert_eq!(tr.reward, 0.0);
            s = next;
        }
        assert_eq!(s.value, 1.0);
        assert!(matches!(env.step(&s, &[1.0, 0.0, 0.0]), Err(Error::Protocol(_))));
    }

    #[test]
    fn constant_growth_closed_form() {
        let market = drifting_market(&[0.0, 0.01], 80);
        let cfg = EnvConfig {
            window: 5,
            episode_len: 30,
            mu: 0.0,
            ..EnvConfig::default()
        };
        let env = TradingEnv::new(&market, cfg).unwrap();
        let mut s = env.reset_at(5, 30).unwrap();
        let mut k = 0;
        while !s.done() {
            let (tr, next) = env.step(&s, &[0.0, 0.0, 1.0]).unwrap();
            assert!((tr.reward - 0.01).abs() < 1e-12);
            k += 1;
            assert!((next.value - (0.01 * k as f64).exp()).abs() < 1e-12);
            s = next;
        }
    }

    #[test]
    fn first_day_cost_is_mu() {
        let market = drifting_market(&[0.003, -0.002, 0.001], 80);
        let env = TradingEnv::new(&market, EnvConfig { window: 10, ..EnvConfig::default() }).unwrap();
        let s = env.reset_at(10, 20).unwrap();
        let (tr, _) = env.step(&s, &[0.0, 0.2, -0.5, 0.3]).unwrap();
        assert!((tr.cost - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn degenerate_action_becomes_cash() {
        let market = drifting_market(&[0.0, 0.01], 30);
        let env = TradingEnv::new(&market, EnvConfig { window: 5, ..EnvConfig::default() }).unwrap();
        let w = env.constrain_action(&[-1.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0, 0.0]);
        assert!(env.constrain_action(&[1.0]).is_err());
    }

    #[test]
    fn average_reward_examples() {
        let market = drifting_market(&[0.0, 0.01], 30);
        let env = TradingEnv::new(&market, EnvConfig { window: 5, episode_len: 2, mu: 0.0, ..EnvConfig::default() }).unwrap();
        let s = env.reset_at(5, 2).unwrap();
        let (mut a, s1) = env.step(&s, &[0.0, 0.0, 1.0]).unwrap();
        let (mut b, _) = env.step(&s1, &[0.0, 0.0, 1.0]).unwrap();
        a.reward = 0.01;
        b.reward = 0.03;
        assert!((average_reward(&[a.clone(), b.clone()]).unwrap() - 0.02).abs() < 1e-15);
        a.reward = 0.0;
        b.reward = 0.0;
        assert_eq!(average_reward(&[a, b]).unwrap(), 0.0);
        assert!(average_reward(&[]).is_err());
    }
}
