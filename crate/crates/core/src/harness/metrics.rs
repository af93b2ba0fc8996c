use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::sim::Event;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    /// Global step at which the episode ended.
    pub end_step: usize,
    /// Undiscounted sum of rewards.
    pub ret: f64,
    pub length: usize,
    pub event: Event,
}

/// One learning-curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub step: usize,
    /// Completed episodes so far.
    pub episode: usize,
    /// Return of the latest completed episode.
    pub ret: f64,
    pub smoothed_return: f64,
    pub usage_fraction: f64,
    pub success_rate: f64,
}

pub const CURVES_HEADER: &str = "step,episode,return,smoothed_return,usage_fraction,success_rate";
pub const EPISODES_HEADER: &str = "episode,end_step,return,length,event";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub total_steps: usize,
    pub episodes: Vec<EpisodeMetrics>,
    pub checkpoints: Vec<CheckpointRow>,
    /// Global step at which the heuristic anneal started, if it did.
    pub anneal_start: Option<usize>,
    /// Wall-clock seconds of the run; kept out of every output file.
    pub wall_seconds: f64,
}

impl RunMetrics {
    pub fn curves_csv(&self) -> String {
        let mut out = String::from(CURVES_HEADER);
        out.push('\n');
        for c in &self.checkpoints {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.step, c.episode, c.ret, c.smoothed_return, c.usage_fraction, c.success_rate
            );
        }
        out
    }

    pub fn episodes_csv(&self) -> String {
        let mut out = String::from(EPISODES_HEADER);
        out.push('\n');
        for e in &self.episodes {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.episode,
                e.end_step,
                e.ret,
                e.length,
                e.event.as_str()
            );
        }
        out
    }

    /// Parses a `curves.csv` back into checkpoint rows.
    pub fn from_curves_csv(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        if lines.next() != Some(CURVES_HEADER) {
            return Err(HarnessError::Config("curves.csv: unexpected header".into()));
        }
        let mut checkpoints = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = || HarnessError::Config(format!("curves.csv line {}: {line:?}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            checkpoints.push(CheckpointRow {
                step: f[0].parse().map_err(|_| bad())?,
                episode: f[1].parse().map_err(|_| bad())?,
                ret: num(2)?,
                smoothed_return: num(3)?,
                usage_fraction: num(4)?,
                success_rate: num(5)?,
            });
        }
        Ok(Self {
            total_steps: checkpoints.last().map_or(0, |c| c.step),
            checkpoints,
            ..Self::default()
        })
    }

    /// Mean smoothed return over checkpoints with `step > from`.
    pub fn window_mean(&self, from: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .checkpoints
            .iter()
            .filter(|c| c.step > from)
            .map(|c| c.smoothed_return)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn final_smoothed(&self) -> Option<f64> {
        self.checkpoints.last().map(|c| c.smoothed_return)
    }
}

/// Trailing statistics over completed episodes.
#[derive(Debug, Clone)]
pub(crate) struct Tracker {
    returns: VecDeque<f64>,
    successes: VecDeque<bool>,
    smoothing: usize,
    success_window: usize,
    pub last_return: f64,
    pub completed: usize,
}

impl Tracker {
    pub fn new(smoothing: usize, success_window: usize) -> Self {
        Self {
            returns: VecDeque::with_capacity(smoothing),
            successes: VecDeque::with_capacity(success_window),
            smoothing,
            success_window,
            last_return: 0.0,
            completed: 0,
        }
    }

    pub fn push(&mut self, ret: f64, event: Event) {
        if self.returns.len() == self.smoothing {
            self.returns.pop_front();
        }
        self.returns.push_back(ret);
        if self.successes.len() == self.success_window {
            self.successes.pop_front();
        }
        self.successes.push_back(event == Event::Reached);
        self.last_return = ret;
        self.completed += 1;
    }

    pub fn smoothed(&self) -> f64 {
        if self.returns.is_empty() {
            return 0.0;
        }
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    pub fn success_rate(&self) -> f64 {
        if self.successes.is_empty() {
            return 0.0;
        }
        self.successes.iter().filter(|s| **s).count() as f64 / self.successes.len() as f64
    }

    pub fn row(&self, step: usize, usage_fraction: f64) -> CheckpointRow {
        CheckpointRow {
            step,
            episode: self.completed,
            ret: self.last_return,
            smoothed_return: self.smoothed(),
            usage_fraction,
            success_rate: self.success_rate(),
        }
    }
}

/// Mean and sample variance (`n - 1` denominator; 0 for a single value).
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}
