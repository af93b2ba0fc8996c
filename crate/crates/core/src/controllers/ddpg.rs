use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Action, OuNoise};
use crate::nn::{Activation, AdamConfig, AdamState, GradientTape, Mlp, MlpShape, NnError};
use crate::replay::Transition;
use crate::sim::ActionBounds;

pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DdpgError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("non-finite TD target at batch index {index}")]
    NonFiniteTarget { index: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, DdpgError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpgConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub tau: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    /// OU sigma reached at the end of the training budget (linear anneal).
    pub ou_sigma_final: f64,
    /// Bootstrap from slowly tracking target copies; when off, the online
    /// networks produce the TD target.
    pub target_networks: bool,
    /// Coefficient of `mean(z^2)` subtracted from the actor objective, where
    /// `z` are the pre-squashing actor outputs.
    pub preact_penalty: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            tau: 1e-3,
            gamma: 0.99,
            batch_size: 32,
            hidden: vec![100, 100],
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_sigma_final: 0.05,
            target_networks: true,
            preact_penalty: 1e-3,
        }
    }
}

/// Anything that can report `dQ/da` for a batch of state-action pairs.
pub trait ActionValue {
    /// Returns `dQ(s_b, a_b)/da_b` for each row, row-major `batch x action_dim`.
    fn action_gradient(&self, states: &[f64], actions: &[f64], batch: usize) -> Result<Vec<f64>>;
}

fn concat_rows(states: &[f64], actions: &[f64], batch: usize) -> Vec<f64> {
    let sd = states.len() / batch;
    let ad = actions.len() / batch;
    let mut out = Vec::with_capacity(batch * (sd + ad));
    for b in 0..batch {
        out.extend_from_slice(&states[b * sd..(b + 1) * sd]);
        out.extend_from_slice(&actions[b * ad..(b + 1) * ad]);
    }
    out
}

/// Critic whose input is `[state, action]`.
impl ActionValue for Mlp {
    fn action_gradient(&self, states: &[f64], actions: &[f64], batch: usize) -> Result<Vec<f64>> {
        let input = concat_rows(states, actions, batch);
        let trace = self.forward_trace(&input, batch)?;
        let tape = self.backward(&trace, &vec![1.0; batch])?;
        let width = self.input_dim();
        let ad = actions.len() / batch;
        Ok(tape
            .input
            .chunks_exact(width)
            .flat_map(|row| row[width - ad..].iter().copied())
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub format_version: u32,
    pub config: DdpgConfig,
    pub bounds: ActionBounds,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_adam: AdamState,
    pub critic_adam: AdamState,
    pub noise: OuNoise,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    config: DdpgConfig,
    bounds: ActionBounds,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_adam: AdamState,
    critic_adam: AdamState,
    noise: OuNoise,
}

pub const ACTION_DIM: usize = 2;

impl DdpgAgent {
    /// Actor: `state -> (sigmoid v, tanh omega)`; critic: `[state, action] -> Q`.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, bounds: ActionBounds, config: DdpgConfig, rng: &mut R) -> Self {
        let actor = Mlp::new(
            &MlpShape::new(
                state_dim,
                &config.hidden,
                Activation::Relu,
                vec![Activation::Sigmoid, Activation::Tanh],
            ),
            rng,
        );
        let critic = Mlp::new(
            &MlpShape::new(
                state_dim + ACTION_DIM,
                &config.hidden,
                Activation::Relu,
                vec![Activation::Identity],
            ),
            rng,
        );
        Self::from_networks(actor, critic, bounds, config)
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, bounds: ActionBounds, config: DdpgConfig) -> Self {
        let actor_adam = AdamState::new(&actor, AdamConfig::with_lr(config.actor_lr));
        let critic_adam = AdamState::new(&critic, AdamConfig::with_lr(config.critic_lr));
        let noise = OuNoise::new(ACTION_DIM, 0.0, config.ou_theta, config.ou_sigma);
        Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_adam,
            critic_adam,
            noise,
            bounds,
            config,
        }
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn noise_mut(&mut self) -> &mut OuNoise {
        &mut self.noise
    }

    pub fn set_noise_sigma(&mut self, sigma: f64) {
        self.noise.sigma = sigma;
    }

    /// Deterministic actor output in normalized coordinates.
    pub fn act_normalized(&self, state: &[f64]) -> Result<[f64; 2]> {
        let out = self.actor.forward(state)?;
        Ok([out[0], out[1]])
    }

    /// `mu(x)`, plus OU noise in normalized coordinates when exploring.
    pub fn propose<R: Rng + ?Sized>(&mut self, state: &[f64], explore: bool, rng: &mut R) -> Result<Action> {
        let mut a = self.act_normalized(state)?;
        if explore {
            let n = self.noise.sample(rng);
            a[0] += n[0];
            a[1] += n[1];
        }
        Ok(Action::from_normalized(a, &self.bounds))
    }

    fn gather(&self, batch: &[&Transition]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.state_dim();
        let mut states = Vec::with_capacity(batch.len() * d);
        let mut next = Vec::with_capacity(batch.len() * d);
        let mut actions = Vec::with_capacity(batch.len() * ACTION_DIM);
        for t in batch {
            states.extend_from_slice(&t.state);
            next.extend_from_slice(&t.next_state);
            actions.extend_from_slice(&t.action.normalized(&self.bounds));
        }
        (states, actions, next)
    }

    /// TD targets `y = r + gamma * Q'(x', mu'(x'))`, with no bootstrap on terminal rows.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let n = batch.len();
        if n == 0 {
            return Err(DdpgError::EmptyBatch);
        }
        let d = self.state_dim();
        let mut next = Vec::with_capacity(n * d);
        for t in batch {
            next.extend_from_slice(&t.next_state);
        }
        let (actor, critic) = if self.config.target_networks {
            (&self.actor_target, &self.critic_target)
        } else {
            (&self.actor, &self.critic)
        };
        let next_actions = actor.forward_batch(&next, n)?;
        let q_next = critic.forward_batch(&concat_rows(&next, &next_actions, n), n)?;
        batch
            .iter()
            .zip(q_next)
            .enumerate()
            .map(|(index, (t, q))| {
                let y = if t.terminal {
                    t.reward
                } else {
                    t.reward + self.config.gamma * q
                };
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(DdpgError::NonFiniteTarget { index })
                }
            })
            .collect()
    }

    /// One Adam step on the importance-weighted mean squared TD error.
    /// Returns `|y - Q(x, a)|` per row, measured before the step.
    pub fn critic_update(&mut self, batch: &[&Transition], weights: &[f64]) -> Result<Vec<f64>> {
        let n = batch.len();
        let targets = self.td_targets(batch)?;
        let (states, actions, _) = self.gather(batch);
        let trace = self.critic.forward_trace(&concat_rows(&states, &actions, n), n)?;
        let q = trace.output();
        let mut grad = Vec::with_capacity(n);
        let mut td = Vec::with_capacity(n);
        for i in 0..n {
            let err = targets[i] - q[i];
            td.push(err.abs());
            grad.push(-2.0 * weights[i] * err / n as f64);
        }
        let mut tape = GradientTape::zeros(&self.critic, n);
        self.critic.backward_into(&trace, &grad, &mut tape, false)?;
        self.critic_adam.step(&mut self.critic, &tape)?;
        Ok(td)
    }

    /// Weighted mean squared TD error of the current critic, without updating.
    pub fn critic_loss(&self, batch: &[&Transition], weights: &[f64]) -> Result<f64> {
        let n = batch.len();
        let targets = self.td_targets(batch)?;
        let (states, actions, _) = self.gather(batch);
        let q = self.critic.forward_batch(&concat_rows(&states, &actions, n), n)?;
        Ok((0..n).map(|i| weights[i] * (targets[i] - q[i]).powi(2)).sum::<f64>() / n as f64)
    }

    /// Gradient of `mean_i Q(x_i, mu(x_i)) - preact_penalty * mean_i |z_i|^2`
    /// with respect to the actor parameters.
    pub fn actor_gradient(&self, states: &[f64], batch: usize, critic: &dyn ActionValue) -> Result<GradientTape> {
        let trace = self.actor.forward_trace(states, batch)?;
        let dq_da = critic.action_gradient(states, trace.output(), batch)?;
        let n = batch as f64;
        let lambda = self.config.preact_penalty;
        let head = self.actor.layers().last().expect("actor has layers").activation();
        let (pre, post) = (trace.output_pre(), trace.output());
        let pre_grad: Vec<f64> = (0..dq_da.len())
            .map(|i| {
                let act = head.of(i % ACTION_DIM);
                (dq_da[i] * act.derivative(pre[i], post[i]) - 2.0 * lambda * pre[i]) / n
            })
            .collect();
        let mut tape = GradientTape::zeros(&self.actor, batch);
        self.actor.backward_pre_into(&trace, &pre_grad, &mut tape, false)?;
        Ok(tape)
    }

    /// One Adam ascent step on `mean Q(x, mu(x))` using the agent's own critic.
    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(DdpgError::EmptyBatch);
        }
        let (states, _, _) = self.gather(batch);
        let mut tape = self.actor_gradient(&states, batch.len(), &self.critic)?;
        tape.scale(-1.0);
        self.actor_adam.step(&mut self.actor, &tape)?;
        Ok(())
    }

    /// Same as [`DdpgAgent::actor_update`] against an arbitrary action-value function.
    pub fn actor_update_with(&mut self, states: &[f64], batch: usize, critic: &dyn ActionValue) -> Result<()> {
        let mut tape = self.actor_gradient(states, batch, critic)?;
        tape.scale(-1.0);
        self.actor_adam.step(&mut self.actor, &tape)?;
        Ok(())
    }

    /// `theta' <- tau * theta + (1 - tau) * theta'` for both target networks.
    pub fn soft_update(&mut self, tau: f64) {
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic_target.soft_update_from(&self.critic, tau);
    }

    pub fn checkpoint(&self) -> AgentCheckpoint {
        AgentCheckpoint {
            format_version: AGENT_CHECKPOINT_VERSION,
            config: self.config.clone(),
            bounds: self.bounds,
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_target: self.actor_target.clone(),
            critic_target: self.critic_target.clone(),
            actor_adam: self.actor_adam.clone(),
            critic_adam: self.critic_adam.clone(),
            noise: self.noise.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: AgentCheckpoint) -> Result<Self> {
        if ckpt.format_version != AGENT_CHECKPOINT_VERSION {
            return Err(DdpgError::Checkpoint(format!(
                "unsupported agent checkpoint version {}",
                ckpt.format_version
            )));
        }
        // re-validate layer shapes that serde accepted blindly
        for net in [&ckpt.actor, &ckpt.critic, &ckpt.actor_target, &ckpt.critic_target] {
            Mlp::from_layers(net.layers().to_vec())?;
        }
        if ckpt.critic.input_dim() != ckpt.actor.input_dim() + ACTION_DIM || ckpt.actor.output_dim() != ACTION_DIM {
            return Err(DdpgError::Checkpoint("actor/critic dimensions disagree".into()));
        }
        Ok(Self {
            config: ckpt.config,
            bounds: ckpt.bounds,
            actor: ckpt.actor,
            critic: ckpt.critic,
            actor_target: ckpt.actor_target,
            critic_target: ckpt.critic_target,
            actor_adam: ckpt.actor_adam,
            critic_adam: ckpt.critic_adam,
            noise: ckpt.noise,
        })
    }
}
