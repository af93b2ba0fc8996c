use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Result, SwitchError, SwitchPolicy};
use crate::controllers::ControllerId;
use crate::nn::{Activation, AdamConfig, AdamState, GradientTape, Mlp, MlpShape};

/// `sum_t gamma^(t-1) r_t`, or the plain sum when `discounted` is off.
pub fn episode_return(rewards: &[f64], gamma: f64, discounted: bool) -> f64 {
    if !discounted {
        return rewards.iter().sum();
    }
    let mut g = 1.0;
    let mut ret = 0.0;
    for r in rewards {
        ret += g * r;
        g *= gamma;
    }
    ret
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub observation: Vec<f64>,
    pub xi: Vec<f64>,
    pub decision: usize,
    pub log_prob: f64,
}

/// One entry per switch tick; rewards are kept per control step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub steps: Vec<TraceStep>,
    pub rewards: Vec<f64>,
    pub ret: f64,
}

impl EpisodeTrace {
    pub fn new(episode: usize) -> Self {
        Self {
            episode,
            ..Self::default()
        }
    }

    /// Number of control steps.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn close(&mut self, gamma: f64, discounted: bool) {
        self.ret = episode_return(&self.rewards, gamma, discounted);
    }
}

/// One line of the switch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub episode: usize,
    pub tick: usize,
    pub xi: Vec<f64>,
    pub decision: usize,
    pub controller: ControllerId,
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlVariatesConfig {
    /// Moving-average decay of the constant baseline.
    pub decay: f64,
    pub hidden: usize,
    pub learning_rate: f64,
}

impl Default for ControlVariatesConfig {
    fn default() -> Self {
        Self {
            decay: 0.95,
            hidden: 64,
            learning_rate: 1e-3,
        }
    }
}

/// Constant baseline `b_c` plus an input-dependent baseline `b(x)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlVariates {
    pub b_c: f64,
    seen: bool,
    decay: f64,
    net: Mlp,
    adam: AdamState,
}

impl ControlVariates {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, config: &ControlVariatesConfig, rng: &mut R) -> Self {
        let net = Mlp::new(
            &MlpShape::new(
                input_dim,
                &[config.hidden],
                Activation::Relu,
                vec![Activation::Identity],
            ),
            rng,
        );
        let adam = AdamState::new(&net, AdamConfig::with_lr(config.learning_rate));
        Self {
            b_c: 0.0,
            seen: false,
            decay: config.decay,
            net,
            adam,
        }
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// `b(x)` for a batch of observations.
    pub fn input_baseline(&self, inputs: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.net.forward_batch(inputs, batch)?)
    }

    /// Folds one return into `b_c`; the first return initialises it.
    pub fn observe_return(&mut self, ret: f64) {
        if self.seen {
            self.b_c = self.decay * self.b_c + (1.0 - self.decay) * ret;
        } else {
            self.b_c = ret;
            self.seen = true;
        }
    }

    /// Folds the batch's returns into `b_c`, then fits `b(x)` to what is left;
    /// returns the baseline loss.
    pub fn update(&mut self, traces: &[EpisodeTrace]) -> Result<f64> {
        for t in traces {
            self.observe_return(t.ret);
        }
        self.fit(traces)
    }

    /// One descent step on `sum_n sum_t (R^n - b_c - b(x_t))^2 / N`; returns the loss.
    fn fit(&mut self, traces: &[EpisodeTrace]) -> Result<f64> {
        let mut tape = GradientTape::zeros(&self.net, 0);
        let n = traces.len() as f64;
        let mut loss = 0.0;
        for trace in traces.iter().filter(|t| !t.steps.is_empty()) {
            let (inputs, batch) = stack(trace);
            let fwd = self.net.forward_trace(&inputs, batch)?;
            let grad: Vec<f64> = fwd
                .output()
                .iter()
                .map(|b| {
                    let resid = trace.ret - self.b_c - b;
                    loss += resid * resid / n;
                    -2.0 * resid / n
                })
                .collect();
            self.net.backward_into(&fwd, &grad, &mut tape, false)?;
        }
        self.adam.step(&mut self.net, &tape)?;
        Ok(loss)
    }
}

fn stack(trace: &EpisodeTrace) -> (Vec<f64>, usize) {
    let inputs: Vec<f64> = trace.steps.iter().flat_map(|s| s.observation.iter().copied()).collect();
    (inputs, trace.steps.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Norm of the (ascent) policy gradient; 0 for a parameter-free switch.
    pub grad_norm: f64,
    /// Learning signal per trace and tick.
    pub signals: Vec<Vec<f64>>,
    pub baseline_loss: Option<f64>,
}

impl UpdateReport {
    /// Switch-log lines for trace `n` of the batch.
    pub fn records(&self, policy: &SwitchPolicy, trace: &EpisodeTrace, n: usize) -> Vec<SwitchRecord> {
        trace
            .steps
            .iter()
            .zip(&self.signals[n])
            .enumerate()
            .map(|(tick, (s, &signal))| SwitchRecord {
                episode: trace.episode,
                tick,
                xi: s.xi.clone(),
                decision: s.decision,
                controller: policy.controllers()[s.decision],
                signal,
            })
            .collect()
    }
}

/// Score-function estimate `(1/N) sum_n sum_t grad log pi(s_t|x_t) (R^n - b_c - b(x_t))`
/// with the baselines as they stand; nothing is updated.
pub fn policy_gradient(
    policy: &SwitchPolicy,
    variates: Option<&ControlVariates>,
    traces: &[EpisodeTrace],
) -> Result<(Option<GradientTape>, Vec<Vec<f64>>)> {
    if traces.is_empty() {
        return Err(SwitchError::EmptyBatch);
    }
    let mut tape = policy.network().map(|net| GradientTape::zeros(net, 0));
    let n = traces.len() as f64;
    let mut signals = Vec::with_capacity(traces.len());
    for trace in traces {
        let (inputs, batch) = stack(trace);
        let b: Vec<f64> = match variates {
            Some(cv) if batch > 0 => cv
                .input_baseline(&inputs, batch)?
                .into_iter()
                .map(|bx| cv.b_c + bx)
                .collect(),
            _ => vec![0.0; batch],
        };
        let signal: Vec<f64> = b.iter().map(|b| trace.ret - b).collect();
        if let Some(tick) = signal.iter().position(|s| !s.is_finite()) {
            return Err(SwitchError::NonFiniteSignal {
                episode: trace.episode,
                tick,
            });
        }
        if let Some(tape) = tape.as_mut() {
            if batch > 0 {
                let decisions: Vec<usize> = trace.steps.iter().map(|s| s.decision).collect();
                let weights: Vec<f64> = signal.iter().map(|s| s / n).collect();
                policy.accumulate_log_prob_gradient(&inputs, &decisions, &weights, tape)?;
            }
        }
        signals.push(signal);
    }
    Ok((tape, signals))
}

/// One REINFORCE ascent step on the switch, then the baseline updates.
pub fn reinforce_update(
    policy: &mut SwitchPolicy,
    variates: Option<&mut ControlVariates>,
    traces: &[EpisodeTrace],
) -> Result<UpdateReport> {
    let (tape, signals) = policy_gradient(policy, variates.as_deref(), traces)?;
    let grad_norm = tape.as_ref().map_or(0.0, GradientTape::norm);
    if let Some(tape) = &tape {
        policy.ascend(tape)?;
    }
    let baseline_loss = match variates {
        Some(cv) => Some(cv.update(traces)?),
        None => None,
    };
    Ok(UpdateReport {
        grad_norm,
        signals,
        baseline_loss,
    })
}
