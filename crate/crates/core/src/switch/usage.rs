use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{Action, ControllerId};

/// Sliding window over the most recent switch decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageStats {
    window: usize,
    recent: VecDeque<ControllerId>,
    counts: [usize; 3],
}

fn slot(c: ControllerId) -> usize {
    match c {
        ControllerId::Ddpg => 0,
        ControllerId::Pid => 1,
        ControllerId::Oa => 2,
    }
}

impl UsageStats {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "usage window must be positive");
        Self {
            window,
            recent: VecDeque::with_capacity(window),
            counts: [0; 3],
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.recent.len() == self.window
    }

    pub fn record(&mut self, c: ControllerId) {
        if self.recent.len() == self.window {
            if let Some(old) = self.recent.pop_front() {
                self.counts[slot(old)] -= 1;
            }
        }
        self.recent.push_back(c);
        self.counts[slot(c)] += 1;
    }

    /// Share of DDPG, PID and OA in the window; all zero when empty.
    pub fn fractions(&self) -> [f64; 3] {
        let n = self.recent.len();
        if n == 0 {
            return [0.0; 3];
        }
        self.counts.map(|c| c as f64 / n as f64)
    }

    /// Share of decisions that picked PID or OA.
    pub fn heuristic_fraction(&self) -> f64 {
        let n = self.recent.len();
        if n == 0 {
            return 0.0;
        }
        (self.counts[1] + self.counts[2]) as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurnOffConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub anneal_steps: usize,
    /// Only trigger once the usage window has filled up.
    pub require_full_window: bool,
}

impl Default for TurnOffConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            threshold: 0.15,
            anneal_steps: 10_000,
            require_full_window: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum TurnOffState {
    Active,
    Annealing { start_step: usize },
    Off { start_step: usize },
}

/// Schedule that phases out heuristic actions once they are rarely picked.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnOff {
    config: TurnOffConfig,
    state: TurnOffState,
}

impl TurnOff {
    pub fn new(config: TurnOffConfig) -> Self {
        Self {
            config,
            state: TurnOffState::Active,
        }
    }

    pub fn state(&self) -> TurnOffState {
        self.state
    }

    pub fn config(&self) -> &TurnOffConfig {
        &self.config
    }

    /// Probability of executing a selected heuristic's action at `step`.
    pub fn heuristic_probability(&self, step: usize) -> f64 {
        match self.state {
            TurnOffState::Active => 1.0,
            TurnOffState::Annealing { start_step } => {
                let elapsed = step.saturating_sub(start_step) as f64;
                (1.0 - elapsed / self.config.anneal_steps.max(1) as f64).max(0.0)
            }
            TurnOffState::Off { .. } => 0.0,
        }
    }

    /// Advances the state machine; call once per control step before filtering.
    pub fn update(&mut self, stats: &UsageStats, step: usize) {
        if let TurnOffState::Active = self.state {
            let ready = !self.config.require_full_window || stats.is_full();
            if self.config.enabled && ready && !stats.is_empty() && stats.heuristic_fraction() <= self.config.threshold
            {
                self.state = TurnOffState::Annealing { start_step: step };
            }
        }
        if let TurnOffState::Annealing { start_step } = self.state {
            if step >= start_step + self.config.anneal_steps {
                self.state = TurnOffState::Off { start_step };
            }
        }
    }

    /// Action actually executed when the switch picked `choice`.
    pub fn filter<R: Rng + ?Sized>(
        &self,
        choice: ControllerId,
        ddpg_action: Action,
        heuristic_action: Action,
        step: usize,
        rng: &mut R,
    ) -> (ControllerId, Action) {
        if !choice.is_heuristic() {
            return (choice, ddpg_action);
        }
        let p = self.heuristic_probability(step);
        let keep = p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p);
        if keep {
            (choice, heuristic_action)
        } else {
            (ControllerId::Ddpg, ddpg_action)
        }
    }
}
