//! Action proposers: proportional goal seeking, reactive obstacle avoidance and
//! a DDPG actor-critic.

mod ddpg;
mod noise;

pub use ddpg::{ActionValue, AgentCheckpoint, DdpgAgent, DdpgConfig, DdpgError, AGENT_CHECKPOINT_VERSION};
pub use noise::OuNoise;

use serde::{Deserialize, Serialize};

use crate::sim::ActionBounds;

/// Commanded `(linear, rotational)` velocity, always inside its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    v: f64,
    omega: f64,
}

impl Action {
    /// Clamps `v` to `[0, v_max]` and `omega` to `[-omega_max, omega_max]`.
    pub fn new(v: f64, omega: f64, bounds: &ActionBounds) -> Self {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, bounds.v_max) };
        let omega = if omega.is_nan() {
            0.0
        } else {
            omega.clamp(-bounds.omega_max, bounds.omega_max)
        };
        Self { v, omega }
    }

    /// From actor-space coordinates: `v` in `[0, 1]`, `omega` in `[-1, 1]`.
    pub fn from_normalized(n: [f64; 2], bounds: &ActionBounds) -> Self {
        Self::new(n[0] * bounds.v_max, n[1] * bounds.omega_max, bounds)
    }

    pub fn normalized(&self, bounds: &ActionBounds) -> [f64; 2] {
        [self.v / bounds.v_max, self.omega / bounds.omega_max]
    }

    pub fn clamped(self, bounds: &ActionBounds) -> Self {
        Self::new(self.v, self.omega, bounds)
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerId {
    Ddpg,
    Pid,
    Oa,
}

impl ControllerId {
    pub const ALL: [ControllerId; 3] = [ControllerId::Ddpg, ControllerId::Pid, ControllerId::Oa];

    pub fn is_heuristic(self) -> bool {
        self != ControllerId::Ddpg
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerId::Ddpg => "ddpg",
            ControllerId::Pid => "pid",
            ControllerId::Oa => "oa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidConfig {
    /// Gain from `x_local` to linear velocity (1/s).
    pub k_v: f64,
    /// Gain from `y_local` to rotational velocity (1/s).
    pub k_omega: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self { k_v: 0.8, k_omega: 1.2 }
    }
}

/// Proportional goal seeking; blind to obstacles.
pub fn pid_action(cfg: &PidConfig, goal_local: (f64, f64), bounds: &ActionBounds) -> Action {
    Action::new(cfg.k_v * goal_local.0, cfg.k_omega * goal_local.1, bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OaConfig {
    /// Safety distance in meters.
    pub beta: f64,
}

impl Default for OaConfig {
    fn default() -> Self {
        Self { beta: 0.6 }
    }
}

/// Rotational speed of the obstacle-avoidance rule.
///
/// The magnitude ramps linearly from `omega_max` at contact to zero at the
/// safety distance; the sign turns away from the side of the closest return
/// (a return straight ahead turns left).
pub fn oa_omega(cfg: &OaConfig, ranges: &[f64], beam_angles: &[f64], omega_max: f64) -> f64 {
    let Some((closest, d_o)) = ranges.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)) else {
        return 0.0;
    };
    if d_o >= cfg.beta {
        return 0.0;
    }
    let magnitude = omega_max * (d_o - cfg.beta).abs() / cfg.beta;
    if beam_angles[closest] > 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Obstacle avoidance only steers; the linear component is borrowed.
pub fn oa_action(cfg: &OaConfig, ranges: &[f64], beam_angles: &[f64], linear: f64, bounds: &ActionBounds) -> Action {
    Action::new(linear, oa_omega(cfg, ranges, beam_angles, bounds.omega_max), bounds)
}
