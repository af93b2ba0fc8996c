//! Stochastic switch over the controller set.
//!
//! A parameterisation network maps the observation to logits; the logits are
//! turned into a distribution over controllers by stick-breaking, softmax or
//! a fixed uniform vector, and a decision is sampled (or argmax-decoded).

mod reinforce;
mod usage;

pub use reinforce::{
    episode_return, policy_gradient, reinforce_update, ControlVariates, ControlVariatesConfig, EpisodeTrace,
    SwitchRecord, TraceStep, UpdateReport,
};
pub use usage::{TurnOff, TurnOffConfig, TurnOffState, UsageStats};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::ControllerId;
use crate::nn::{Activation, AdamConfig, AdamState, GradientTape, Mlp, MlpShape, NnError};

#[derive(Debug, Error)]
pub enum SwitchError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("break fraction {index} is {value}, outside [0, 1]")]
    InvalidBreak { index: usize, value: f64 },
    #[error("switch distribution is not a valid simplex: {0:?}")]
    Degenerate(Vec<f64>),
    #[error("decision {decision} out of range for {k} controllers")]
    DecisionOutOfRange { decision: usize, k: usize },
    #[error("non-finite learning signal in episode {episode} at tick {tick}")]
    NonFiniteSignal { episode: usize, tick: usize },
    #[error("no episodes to learn from")]
    EmptyBatch,
    #[error("invalid switch configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SwitchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    StickBreaking,
    Softmax,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decode {
    Sample,
    Argmax,
}

/// Order in which the stick is broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakOrder {
    /// DDPG, PID, OA.
    DdpgPidOa,
    /// DDPG, OA, PID.
    DdpgOaPid,
}

impl BreakOrder {
    fn priority(self) -> [ControllerId; 3] {
        match self {
            BreakOrder::DdpgPidOa => [ControllerId::Ddpg, ControllerId::Pid, ControllerId::Oa],
            BreakOrder::DdpgOaPid => [ControllerId::Ddpg, ControllerId::Oa, ControllerId::Pid],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwitchConfig {
    pub construction: Construction,
    pub decode: Decode,
    pub order: BreakOrder,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Use the discounted episode return as `R`; otherwise the plain sum.
    pub discounted_return: bool,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        Self {
            construction: Construction::StickBreaking,
            decode: Decode::Sample,
            order: BreakOrder::DdpgPidOa,
            hidden: vec![32],
            learning_rate: 1e-3,
            discounted_return: true,
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Stick-breaking from break fractions `eta` (length `K-1`).
///
/// Piece `i` is `eta_i * prod_{j<i} (1 - eta_j)`, the last piece is what is
/// left of the stick, and piece `i` lands at position `order[i]` of the result.
pub fn stick_breaking(eta: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    let k = eta.len() + 1;
    if order.len() != k {
        return Err(SwitchError::Config(format!(
            "order has {} entries, expected {k}",
            order.len()
        )));
    }
    if let Some((index, &value)) = eta.iter().enumerate().find(|(_, e)| !(0.0..=1.0).contains(*e)) {
        return Err(SwitchError::InvalidBreak { index, value });
    }
    let mut xi = vec![0.0; k];
    let mut rest = 1.0;
    for (i, e) in eta.iter().enumerate() {
        xi[order[i]] = e * rest;
        rest *= 1.0 - e;
    }
    xi[order[k - 1]] = rest;
    Ok(xi)
}

/// Inverse of [`stick_breaking`] on the open simplex.
pub fn stick_unbreaking(xi: &[f64], order: &[usize]) -> Vec<f64> {
    let mut rest = 1.0;
    let mut eta = Vec::with_capacity(xi.len().saturating_sub(1));
    for &pos in &order[..order.len() - 1] {
        eta.push(xi[pos] / rest);
        rest -= xi[pos];
    }
    eta
}

/// `log xi` for stick-breaking of `sigmoid(alpha)`, without forming `xi`.
fn stick_log_probs(alpha: &[f64], order: &[usize]) -> Vec<f64> {
    let k = alpha.len() + 1;
    let mut out = vec![0.0; k];
    let mut log_rest = 0.0;
    for (i, &a) in alpha.iter().enumerate() {
        out[order[i]] = log_rest - softplus(-a);
        log_rest -= softplus(a);
    }
    out[order[k - 1]] = log_rest;
    out
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Index into [`SwitchPolicy::controllers`].
    pub index: usize,
    pub controller: ControllerId,
    pub log_prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchPolicy {
    controllers: Vec<ControllerId>,
    /// Break index -> decision index.
    breaks: Vec<usize>,
    construction: Construction,
    decode: Decode,
    input_dim: usize,
    network: Option<Mlp>,
    adam: Option<AdamState>,
}

impl SwitchPolicy {
    /// `controllers` fixes the decision indices. A single controller gives a
    /// forced switch with no parameters, as does the uniform construction.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        controllers: &[ControllerId],
        config: &SwitchConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if controllers.is_empty() {
            return Err(SwitchError::Config("empty controller set".into()));
        }
        for (i, c) in controllers.iter().enumerate() {
            if controllers[..i].contains(c) {
                return Err(SwitchError::Config(format!("{} listed twice", c.as_str())));
            }
        }
        let breaks: Vec<usize> = config
            .order
            .priority()
            .iter()
            .filter_map(|c| controllers.iter().position(|x| x == c))
            .collect();
        let k = controllers.len();
        let head = match config.construction {
            _ if k == 1 => 0,
            Construction::StickBreaking => k - 1,
            Construction::Softmax => k,
            Construction::Uniform => 0,
        };
        let network = (head > 0).then(|| {
            Mlp::new(
                &MlpShape::new(
                    input_dim,
                    &config.hidden,
                    Activation::Relu,
                    vec![Activation::Identity; head],
                ),
                rng,
            )
        });
        let adam = network
            .as_ref()
            .map(|n| AdamState::new(n, AdamConfig::with_lr(config.learning_rate)));
        Ok(Self {
            controllers: controllers.to_vec(),
            breaks,
            construction: config.construction,
            decode: config.decode,
            input_dim,
            network,
            adam,
        })
    }

    pub fn controllers(&self) -> &[ControllerId] {
        &self.controllers
    }

    pub fn k(&self) -> usize {
        self.controllers.len()
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn decode_kind(&self) -> Decode {
        self.decode
    }

    pub fn break_order(&self) -> &[usize] {
        &self.breaks
    }

    pub fn network(&self) -> Option<&Mlp> {
        self.network.as_ref()
    }

    pub fn network_mut(&mut self) -> Option<&mut Mlp> {
        self.network.as_mut()
    }

    pub fn is_forced(&self) -> bool {
        self.controllers.len() == 1
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(NnError::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            }
            .into());
        }
        Ok(())
    }

    /// Maps a row of logits to `log xi`.
    fn log_probs_from_logits(&self, logits: &[f64]) -> Vec<f64> {
        let k = self.k();
        match (&self.network, self.construction) {
            (None, _) => vec![-(k as f64).ln(); k],
            (Some(_), Construction::StickBreaking) => stick_log_probs(logits, &self.breaks),
            (Some(_), _) => log_softmax(logits),
        }
    }

    /// `log xi(x)`, computed in log space.
    pub fn log_distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match &self.network {
            None => Ok(self.log_probs_from_logits(&[])),
            Some(net) => Ok(self.log_probs_from_logits(&net.forward(x)?)),
        }
    }

    /// The switch distribution `xi(x)`, indexed like [`Self::controllers`].
    pub fn distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let k = self.k();
        let Some(net) = &self.network else {
            return Ok(vec![1.0 / k as f64; k]);
        };
        let logits = net.forward(x)?;
        Ok(match self.construction {
            Construction::StickBreaking => {
                let eta: Vec<f64> = logits.iter().map(|&a| crate::nn::sigmoid(a)).collect();
                stick_breaking(&eta, &self.breaks)?
            }
            _ => self.log_probs_from_logits(&logits).iter().map(|l| l.exp()).collect(),
        })
    }

    /// Draws (or argmax-decodes) a decision from `xi`.
    pub fn decide<R: Rng + ?Sized>(&self, xi: &[f64], rng: &mut R) -> Result<Decision> {
        if xi.len() != self.k() || xi.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SwitchError::Degenerate(xi.to_vec()));
        }
        let index = match self.decode {
            Decode::Argmax => {
                let mut best = 0;
                for (i, &p) in xi.iter().enumerate() {
                    if p > xi[best] {
                        best = i;
                    }
                }
                best
            }
            Decode::Sample => {
                let total: f64 = xi.iter().sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = None;
                for (i, &p) in xi.iter().enumerate() {
                    acc += p;
                    if p > 0.0 {
                        pick = Some(i);
                        if u < acc {
                            break;
                        }
                    }
                }
                pick.ok_or_else(|| SwitchError::Degenerate(xi.to_vec()))?
            }
        };
        Ok(Decision {
            index,
            controller: self.controllers[index],
            log_prob: xi[index].ln(),
        })
    }

    /// `d log xi_s / d logits` for one row.
    fn logit_gradient(&self, logits: &[f64], decision: usize) -> Vec<f64> {
        match self.construction {
            Construction::StickBreaking => {
                let pos = self.breaks.iter().position(|&d| d == decision).unwrap_or(0);
                logits
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| {
                        let eta = crate::nn::sigmoid(a);
                        if i < pos {
                            -eta
                        } else if i == pos {
                            1.0 - eta
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            _ => {
                let lp = log_softmax(logits);
                lp.iter()
                    .enumerate()
                    .map(|(i, l)| f64::from(u8::from(i == decision)) - l.exp())
                    .collect()
            }
        }
    }

    /// Accumulates `sum_t weight_t * grad log xi_{s_t}(x_t)` over a batch of
    /// observations (row-major) into `tape`. No-op for a parameter-free switch.
    pub fn accumulate_log_prob_gradient(
        &self,
        inputs: &[f64],
        decisions: &[usize],
        weights: &[f64],
        tape: &mut GradientTape,
    ) -> Result<()> {
        let Some(net) = &self.network else {
            return Ok(());
        };
        let batch = decisions.len();
        if let Some(&decision) = decisions.iter().find(|&&d| d >= self.k()) {
            return Err(SwitchError::DecisionOutOfRange { decision, k: self.k() });
        }
        let trace = net.forward_trace(inputs, batch)?;
        let head = net.output_dim();
        let mut grad = Vec::with_capacity(batch * head);
        for (b, row) in trace.output().chunks_exact(head).enumerate() {
            grad.extend(
                self.logit_gradient(row, decisions[b])
                    .into_iter()
                    .map(|g| g * weights[b]),
            );
        }
        net.backward_into(&trace, &grad, tape, false)?;
        Ok(())
    }

    /// `grad_theta log xi_s(x)`; `None` when the switch has no parameters.
    pub fn log_prob_gradient(&self, x: &[f64], decision: usize) -> Result<Option<GradientTape>> {
        self.check_dim(x)?;
        let Some(net) = &self.network else {
            return Ok(None);
        };
        let mut tape = GradientTape::zeros(net, 1);
        self.accumulate_log_prob_gradient(x, &[decision], &[1.0], &mut tape)?;
        Ok(Some(tape))
    }

    /// One Adam ascent step along `grad`.
    pub(crate) fn ascend(&mut self, grad: &GradientTape) -> Result<()> {
        if let (Some(net), Some(adam)) = (self.network.as_mut(), self.adam.as_mut()) {
            let mut descent = grad.clone();
            descent.scale(-1.0);
            adam.step(net, &descent)?;
        }
        Ok(())
    }
}
