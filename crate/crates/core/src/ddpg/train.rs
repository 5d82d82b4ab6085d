use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::agent::{explore_action, Agent, AgentParams, ExplorationNoise};
use super::replay::{ReplayBuffer, DEFAULT_CAPACITY};
use crate::error::{Error, Result};
use crate::market_data::AlignedMarket;
use crate::neural::{policy_action, ActorNet, CriticNet, MIN_WINDOW};
use crate::trading_env::{EnvConfig, TradingEnv};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub buffer_capacity: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub total_steps: usize,
    pub noise_mean: f64,
    /// Variance of the exploration noise.
    pub noise_var: f64,
    pub gamma: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 64,
            buffer_capacity: DEFAULT_CAPACITY,
            critic_lr: 5e-4,
            actor_lr: 4e-5,
            total_steps: 300_000,
            noise_mean: 0.05,
            noise_var: 0.25,
            gamma: 0.99,
            tau: 0.001,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("critic_lr", self.critic_lr),
            ("actor_lr", self.actor_lr),
            ("tau", self.tau),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau > 1.0 {
            return Err(Error::Config(format!("tau must be <= 1, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.batch == 0 || self.batch > self.buffer_capacity {
            return Err(Error::Config(format!(
                "batch {} must be in 1..=buffer capacity {}",
                self.batch, self.buffer_capacity
            )));
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::Config(format!("noise variance {} is negative", self.noise_var)));
        }
        Ok(())
    }

    pub fn agent_params(&self, arbitrage: bool) -> AgentParams {
        AgentParams {
            critic_lr: self.critic_lr,
            actor_lr: self.actor_lr,
            gamma: self.gamma,
            tau: self.tau,
            arbitrage,
        }
    }
}

/// Summary of one completed training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Global step at which the episode began.
    pub start_step: usize,
    pub mean_daily_return: f64,
    pub final_value: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "episode,step,mean_daily_return,final_value,mean_cost";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.episode, r.start_step, r.mean_daily_return, r.final_value, r.mean_cost
            ));
        }
        out
    }

    /// `(step, mean daily return)` pairs for the training-slope diagnostic.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.episodes
            .iter()
            .map(|r| (r.start_step as f64, r.mean_daily_return))
            .collect()
    }
}

pub struct TrainOutcome {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub log: TrainLog,
}

// independent random streams derived from one seed
const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_REPLAY: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs DDPG over random episode windows of `market`.
pub fn train(market: &AlignedMarket, env_config: &EnvConfig, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(market, env_config, config, |_, _| Ok(()))
}

/// [`train`] with a hook called after every completed episode.
pub fn train_with<F>(
    market: &AlignedMarket,
    env_config: &EnvConfig,
    config: &TrainConfig,
    mut on_episode: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpisodeRecord, &Agent) -> Result<()>,
{
    config.validate()?;
    if env_config.window < MIN_WINDOW {
        return Err(Error::Config(format!(
            "networks need a window of at least {MIN_WINDOW}, got {}",
            env_config.window
        )));
    }
    let env = TradingEnv::new(market, env_config.clone())?;
    env.max_start()?;

    let arbitrage = env_config.arbitrage_enabled;
    let mut agent = Agent::new(
        market.num_assets(),
        env_config.window,
        config.agent_params(arbitrage),
        &mut stream(config.seed, STREAM_INIT),
    )?;
    let noise = ExplorationNoise::new(config.noise_mean, config.noise_var)?;
    let mut env_rng = stream(config.seed, STREAM_ENV);
    let mut noise_rng = stream(config.seed, STREAM_NOISE);
    let mut replay_rng = stream(config.seed, STREAM_REPLAY);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut log = TrainLog::default();

    let mut step = 0;
    while step < config.total_steps {
        let mut state = env.reset(&mut env_rng)?;
        let start_step = step;
        let (mut reward_sum, mut cost_sum) = (0.0, 0.0);
        while !state.done() && step < config.total_steps {
            let raw = agent.actor.raw(&state.tensor)?;
            let noisy = explore_action(&raw, Some(&noise), &mut noise_rng);
            let action = policy_action(&noisy, arbitrage);
            let (transition, next) = env.step(&state, action.as_slice())?;
            reward_sum += transition.reward;
            cost_sum += transition.cost;
            buffer.push(transition);

            if let Some(batch) = buffer.sample(config.batch, &mut replay_rng) {
                agent.update_critic(&batch)?;
                agent.update_actor(&batch)?;
                agent.soft_update_targets()?;
            }
            state = next;
            step += 1;
        }
        if state.done() {
            let len = state.steps_done as f64;
            let record = EpisodeRecord {
                episode: log.episodes.len(),
                start_step,
                mean_daily_return: reward_sum / len,
                final_value: state.value,
                mean_cost: cost_sum / len,
            };
            log::debug!(
                "episode {} step {} mean return {:.6}",
                record.episode,
                record.start_step,
                record.mean_daily_return
            );
            on_episode(&record, &agent)?;
            log.episodes.push(record);
        }
    }

    Ok(TrainOutcome {
        actor: agent.actor,
        critic: agent.critic,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::random_market;

    fn small() -> (AlignedMarket, EnvConfig, TrainConfig) {
        let market = random_market(&[0.001, 0.0, -0.0005], 0.01, 300, 21);
        let env = EnvConfig {
            window: 5,
            ..EnvConfig::default()
        };
        let cfg = TrainConfig {
            total_steps: 504,
            seed: 3,
            ..TrainConfig::default()
        };
        (market, env, cfg)
    }

    #[test]
    fn two_full_episodes_in_504_steps() {
        let (market, env, cfg) = small();
        let out = train(&market, &env, &cfg).unwrap();
        assert_eq!(out.log.episodes.len(), 2);
        assert_eq!(out.log.episodes[1].start_step, 252);
        let csv = out.log.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(TrainLog::CSV_HEADER));
        assert!(out.log.episodes.iter().all(|r| r.final_value > 0.0 && r.mean_daily_return.is_finite()));
    }

    #[test]
    fn partial_episode_is_not_logged() {
        let (market, env, cfg) = small();
        let cfg = TrainConfig { total_steps: 300, ..cfg };
        let mut seen = 0;
        let out = train_with(&market, &env, &cfg, |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(out.log.episodes.len(), 1);
        assert_eq!(seen, 1);
    }

    #[test]
    fn same_seed_same_run() {
        let (market, env, cfg) = small();
        let cfg = TrainConfig { total_steps: 260, ..cfg };
        let a = train(&market, &env, &cfg).unwrap();
        let b = train(&market, &env, &cfg).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.actor.net.params(), b.actor.net.params());
        let c = train(&market, &env, &TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.actor.net.params(), c.actor.net.params());
    }

    #[test]
    fn rejects_bad_settings() {
        let (market, env, cfg) = small();
        assert!(train(&market, &env, &TrainConfig { batch: 700, ..cfg.clone() }).is_err());
        assert!(train(&market, &env, &TrainConfig { tau: 0.0, ..cfg.clone() }).is_err());
        let narrow = EnvConfig { window: 4, ..env.clone() };
        assert!(matches!(train(&market, &narrow, &cfg), Err(Error::Config(_))));
        let short = market.slice(0, 100).unwrap();
        assert!(train(&short, &env, &cfg).is_err());
    }
}
