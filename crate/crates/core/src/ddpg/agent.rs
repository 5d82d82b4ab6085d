use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::optim::Adam;
use crate::error::{Error, Result};
use crate::market_data::PriceTensor;
use crate::neural::{policy_action, policy_action_backward, ActorNet, CriticNet, Network, Tensor};
use crate::portfolio_math::WeightVector;
use crate::trading_env::Transition;

/// Gaussian perturbation of raw actor scores.
#[derive(Debug, Clone)]
pub struct ExplorationNoise {
    dist: Normal<f64>,
}

impl ExplorationNoise {
    /// `variance` is a variance, not a standard deviation.
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && mean.is_finite() && variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise needs a finite mean and nonnegative variance, got N({mean}, {variance})"
            )));
        }
        Ok(Self {
            dist: Normal::new(mean, variance.sqrt()).expect("validated parameters"),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.dist.sample(rng)
    }
}

/// Adds i.i.d. noise to every raw score; `None` leaves the scores untouched.
pub fn explore_action<R: Rng + ?Sized>(raw: &[f64], noise: Option<&ExplorationNoise>, rng: &mut R) -> Vec<f64> {
    match noise {
        Some(n) => raw.iter().map(|&r| r + n.sample(rng)).collect(),
        None => raw.to_vec(),
    }
}

/// `target ← tau · online + (1 - tau) · target`, parameter by parameter.
pub fn soft_update(target: &mut Network, online: &Network, tau: f64) -> Result<()> {
    let src = online.params();
    let mut dst = target.params_mut();
    if src.len() != dst.len() || src.iter().zip(&dst).any(|(a, b)| a.shape() != b.shape()) {
        return Err(Error::Shape("soft update between differently shaped networks".into()));
    }
    for (t, o) in dst.iter_mut().zip(src) {
        for (ti, &oi) in t.data_mut().iter_mut().zip(o.data()) {
            *ti = tau * oi + (1.0 - tau) * *ti;
        }
    }
    Ok(())
}

/// Learning rates and update constants the agent needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentParams {
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub arbitrage: bool,
}

/// Online and target actor/critic pairs with their optimizers.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: ActorNet,
    pub critic: CriticNet,
    pub target_actor: ActorNet,
    pub target_critic: CriticNet,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub params: AgentParams,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(m: usize, window: usize, params: AgentParams, rng: &mut R) -> Result<Self> {
        let actor = ActorNet::new(m, window, rng)?;
        let critic = CriticNet::new(m, window, rng)?;
        Ok(Self::from_networks(actor, critic, params))
    }

    pub fn from_networks(actor: ActorNet, critic: CriticNet, params: AgentParams) -> Self {
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt: Adam::new(params.actor_lr),
            critic_opt: Adam::new(params.critic_lr),
            params,
        }
    }

    /// Bootstrapped regression target for one transition.
    pub fn td_target(&self, tr: &Transition) -> Result<f64> {
        if tr.done || self.params.gamma == 0.0 {
            return Ok(tr.reward);
        }
        let next = &tr.next_state.tensor;
        let a_next = policy_action(&self.target_actor.raw(next)?, self.params.arbitrage);
        Ok(tr.reward + self.params.gamma * self.target_critic.q(next, &a_next)?)
    }

    /// Mean squared TD error over `batch` and its parameter gradient.
    pub fn critic_loss_and_grad(&mut self, batch: &[&Transition]) -> Result<(f64, Vec<Tensor>)> {
        let n = batch.len() as f64;
        let mut acc: Vec<Tensor> = self.critic.net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut loss = 0.0;
        for tr in batch {
            let y = self.td_target(tr)?;
            let q = self.critic.forward_q(&tr.state.tensor, &tr.action)?;
            let err = q - y;
            loss += err * err / n;
            self.critic
                .net
                .backward_accumulate(&Tensor::new(vec![1], vec![2.0 * err / n])?, &mut acc)?;
        }
        Ok((loss, acc))
    }

    /// One Adam step on the critic; returns the loss before the step.
    pub fn update_critic(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let (loss, grads) = self.critic_loss_and_grad(batch)?;
        self.critic_opt.step(self.critic.net.params_mut(), &grads);
        Ok(loss)
    }

    /// One Adam ascent step of the actor on mean `Q(s, π(s))`; returns the
    /// objective before the step.
    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64> {
        let critic = &mut self.critic;
        actor_ascent_step(
            &mut self.actor,
            &mut self.actor_opt,
            batch.iter().map(|tr| &tr.state.tensor),
            self.params.arbitrage,
            |x, w| {
                let q = critic.forward_q(x, w)?;
                Ok((q, critic.action_gradient()?))
            },
        )
    }

    pub fn soft_update_targets(&mut self) -> Result<()> {
        soft_update(&mut self.target_actor.net, &self.actor.net, self.params.tau)?;
        soft_update(&mut self.target_critic.net, &self.critic.net, self.params.tau)
    }
}

/// Mean of `q(x, π(x))` over `states` and its gradient with respect to the
/// actor parameters. `q` returns the value and `dQ/dw` for the risky weights.
pub fn actor_objective_and_grad<'a, F>(
    actor: &mut ActorNet,
    states: impl IntoIterator<Item = &'a PriceTensor>,
    arbitrage: bool,
    mut q: F,
) -> Result<(f64, Vec<Tensor>)>
where
    F: FnMut(&PriceTensor, &WeightVector) -> Result<(f64, Vec<f64>)>,
{
    let states: Vec<&PriceTensor> = states.into_iter().collect();
    if states.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let n = states.len() as f64;
    let mut acc: Vec<Tensor> = actor.net.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut objective = 0.0;
    for x in states {
        let raw = actor.forward_raw(x)?;
        let w = policy_action(&raw, arbitrage);
        let (value, dq_risky) = q(x, &w)?;
        objective += value / n;
        let mut grad_w = Vec::with_capacity(raw.len());
        grad_w.push(0.0);
        grad_w.extend(dq_risky.iter().map(|g| g / n));
        let grad_raw = policy_action_backward(&raw, &grad_w, arbitrage);
        let len = grad_raw.len();
        actor.net.backward_accumulate(&Tensor::new(vec![len], grad_raw)?, &mut acc)?;
    }
    Ok((objective, acc))
}

/// Gradient ascent on the actor objective through `opt`.
pub fn actor_ascent_step<'a, F>(
    actor: &mut ActorNet,
    opt: &mut Adam,
    states: impl IntoIterator<Item = &'a PriceTensor>,
    arbitrage: bool,
    q: F,
) -> Result<f64>
where
    F: FnMut(&PriceTensor, &WeightVector) -> Result<(f64, Vec<f64>)>,
{
    let (objective, mut grads) = actor_objective_and_grad(actor, states, arbitrage, q)?;
    for g in &mut grads {
        g.scale(-1.0);
    }
    opt.step(actor.net.params_mut(), &grads);
    Ok(objective)
}
