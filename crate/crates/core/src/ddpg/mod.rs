//! Deep deterministic policy gradient training over the trading environment.

mod agent;
mod optim;
mod replay;
mod train;

pub use agent::{
    actor_ascent_step, actor_objective_and_grad, explore_action, soft_update, Agent, AgentParams,
    ExplorationNoise,
};
pub use optim::Adam;
pub use replay::{ReplayBuffer, DEFAULT_CAPACITY};
pub use train::{train, train_with, EpisodeRecord, TrainConfig, TrainLog, TrainOutcome};
