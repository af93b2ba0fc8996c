//! Rank-based prioritized experience replay.
//!
//! Items are kept in a ring buffer; a separate rank structure orders them by
//! priority (highest first). Rank `k` (1-based) is drawn with probability
//! proportional to `k^-alpha`, and the cumulative weights `sum_{j<=k} j^-alpha`
//! do not depend on the buffer size, so they are tabulated once up to capacity
//! and sampling is an exact binary search at every size.

mod ranks;

pub use ranks::RankList;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::Action;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("buffer holds {have} transitions, batch needs {need}")]
    Underfull { have: usize, need: usize },
    #[error("invalid replay configuration: {0}")]
    Config(String),
}

/// `(x_t, a_t, r_t, x_{t+1}, terminal)` with `a_t` the action actually executed.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub capacity: usize,
    /// Rank exponent.
    pub alpha: f64,
    /// Importance-sampling exponent at the start of training.
    pub beta_start: f64,
    /// Importance-sampling exponent reached at the end of the budget.
    pub beta_end: f64,
    /// Floor added to `|td|` so every priority stays positive.
    pub epsilon: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 100_000,
            alpha: 0.7,
            beta_start: 0.5,
            beta_end: 1.0,
            epsilon: 1e-6,
        }
    }
}

/// Handle to a sampled item; goes stale once the slot is overwritten.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    pub slot: usize,
    pub id: u64,
}

#[derive(Debug)]
pub struct Sample<'a> {
    pub transitions: Vec<&'a Transition>,
    pub refs: Vec<SampleRef>,
    /// Importance weights normalized by the largest weight in the batch.
    pub weights: Vec<f64>,
    /// 1-based rank of each draw at sampling time.
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    config: ReplayConfig,
    items: Vec<Transition>,
    ids: Vec<u64>,
    priorities: Vec<f64>,
    next_slot: usize,
    next_id: u64,
    ranks: RankList,
    cumulative: Vec<f64>,
    beta: f64,
    stale_updates: u64,
}

impl PrioritizedBuffer {
    pub fn new(config: ReplayConfig) -> Result<Self, ReplayError> {
        if config.capacity == 0 {
            return Err(ReplayError::Config("capacity must be positive".into()));
        }
        if !(config.alpha >= 0.0 && config.epsilon > 0.0) {
            return Err(ReplayError::Config("alpha must be >= 0 and epsilon > 0".into()));
        }
        let mut cumulative = Vec::with_capacity(config.capacity);
        let mut acc = 0.0;
        for k in 1..=config.capacity {
            acc += (k as f64).powf(-config.alpha);
            cumulative.push(acc);
        }
        Ok(Self {
            beta: config.beta_start,
            config,
            items: Vec::new(),
            ids: Vec::new(),
            priorities: Vec::new(),
            next_slot: 0,
            next_id: 0,
            ranks: RankList::default(),
            cumulative,
            stale_updates: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn stale_updates(&self) -> u64 {
        self.stale_updates
    }

    /// Linear importance-sampling anneal; `progress` is the fraction of the budget used.
    pub fn set_progress(&mut self, progress: f64) {
        let p = progress.clamp(0.0, 1.0);
        self.beta = self.config.beta_start + p * (self.config.beta_end - self.config.beta_start);
    }

    pub fn max_priority(&self) -> f64 {
        self.ranks.first().map_or(1.0, |k| k.priority)
    }

    pub fn priority(&self, slot: usize) -> f64 {
        self.priorities[slot]
    }

    pub fn get(&self, slot: usize) -> &Transition {
        &self.items[slot]
    }

    pub fn id(&self, slot: usize) -> u64 {
        self.ids[slot]
    }

    /// Most recently pushed transition.
    pub fn newest(&self) -> Option<&Transition> {
        if self.items.is_empty() {
            return None;
        }
        let slot = (self.next_slot + self.config.capacity - 1) % self.config.capacity;
        self.items.get(slot)
    }

    /// Slots ordered from rank 1 (highest priority) downwards.
    pub fn ranked_slots(&self) -> Vec<usize> {
        self.ranks.iter().map(|k| k.slot).collect()
    }

    /// Probability of drawing rank `k` (1-based) at the current size.
    pub fn rank_probability(&self, k: usize) -> f64 {
        let n = self.len();
        assert!(k >= 1 && k <= n);
        (k as f64).powf(-self.config.alpha) / self.cumulative[n - 1]
    }

    /// Inserts at the current maximum priority, evicting the oldest item when full.
    pub fn push(&mut self, transition: Transition) {
        let priority = self.max_priority();
        let id = self.next_id;
        self.next_id += 1;
        let slot = if self.items.len() < self.config.capacity {
            self.items.push(transition);
            self.ids.push(id);
            self.priorities.push(priority);
            self.items.len() - 1
        } else {
            let slot = self.next_slot;
            self.ranks.remove(ranks::Key {
                priority: self.priorities[slot],
                id: self.ids[slot],
                slot,
            });
            self.items[slot] = transition;
            self.ids[slot] = id;
            self.priorities[slot] = priority;
            slot
        };
        self.next_slot = (slot + 1) % self.config.capacity;
        self.ranks.insert(ranks::Key { priority, id, slot });
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Sample<'_>, ReplayError> {
        let n = self.len();
        if n < batch_size || batch_size == 0 {
            return Err(ReplayError::Underfull {
                have: n,
                need: batch_size.max(1),
            });
        }
        let total = self.cumulative[n - 1];
        let mut sample = Sample {
            transitions: Vec::with_capacity(batch_size),
            refs: Vec::with_capacity(batch_size),
            weights: Vec::with_capacity(batch_size),
            ranks: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let u = rng.random::<f64>() * total;
            let k = self.cumulative[..n].partition_point(|&c| c <= u).min(n - 1);
            let key = self.ranks.select(k);
            let p = self.rank_probability(k + 1);
            sample.transitions.push(&self.items[key.slot]);
            sample.refs.push(SampleRef {
                slot: key.slot,
                id: key.id,
            });
            sample.weights.push((n as f64 * p).powf(-self.beta));
            sample.ranks.push(k + 1);
        }
        let max_w = sample.weights.iter().cloned().fold(0.0, f64::max);
        sample.weights.iter_mut().for_each(|w| *w /= max_w);
        Ok(sample)
    }

    /// Sets priorities to `|td| + epsilon`; refs to overwritten slots are counted and skipped.
    pub fn update_priorities(&mut self, refs: &[SampleRef], td_errors: &[f64]) {
        for (r, td) in refs.iter().zip(td_errors) {
            if r.slot >= self.items.len() || self.ids[r.slot] != r.id {
                self.stale_updates += 1;
                continue;
            }
            let new = td.abs() + self.config.epsilon;
            let old = self.priorities[r.slot];
            if new == old {
                continue;
            }
            self.ranks.remove(ranks::Key {
                priority: old,
                id: r.id,
                slot: r.slot,
            });
            self.priorities[r.slot] = new;
            self.ranks.insert(ranks::Key {
                priority: new,
                id: r.id,
                slot: r.slot,
            });
        }
    }
}
