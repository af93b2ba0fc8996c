use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::controllers::{ControllerId, DdpgConfig, OaConfig, PidConfig};
use crate::replay::ReplayConfig;
use crate::sim::{ActionBounds, RewardConfig, World};
use crate::switch::{BreakOrder, Construction, ControlVariatesConfig, Decode, SwitchConfig, TurnOffConfig};

/// Which training loop runs the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Controllers arbitrated by the switch.
    Switched,
    /// Plain DDPG with no switch at all.
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub engine: Engine,
    /// Bundled world name (`four_obstacles`, `open`) or a path to a world file.
    pub world: String,
    pub controllers: Vec<ControllerId>,
    pub control_variates: bool,
    pub total_steps: usize,
    pub seeds: Vec<u64>,
    pub control_frequency: f64,
    pub switch_frequency: f64,
    /// Control steps before an episode times out.
    pub step_budget: usize,
    /// Transitions collected before DDPG updates start.
    pub warmup: usize,
    pub checkpoint_every: usize,
    /// Episodes in the trailing mean of the learning curve.
    pub smoothing_window: usize,
    /// Episodes in the trailing success rate.
    pub success_window: usize,
    /// Switch ticks in the usage window.
    pub usage_window: usize,
    /// Log every n-th episode to `trajectory.jsonl`; 0 turns the log off.
    pub trajectory_every: usize,
    /// Greedy episodes used by evaluations the harness runs itself.
    pub eval_episodes: usize,
    pub switch: SwitchConfig,
    pub baseline: ControlVariatesConfig,
    pub turnoff: TurnOffConfig,
    pub reward: RewardConfig,
    pub bounds: ActionBounds,
    pub pid: PidConfig,
    pub oa: OaConfig,
    pub ddpg: DdpgConfig,
    pub replay: ReplayConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "sguidance".into(),
            engine: Engine::Switched,
            world: "four_obstacles".into(),
            controllers: ControllerId::ALL.to_vec(),
            control_variates: true,
            total_steps: 50_000,
            seeds: vec![0, 1, 2],
            control_frequency: 5.0,
            switch_frequency: 1.0,
            step_budget: 300,
            warmup: 1_000,
            checkpoint_every: 1_000,
            smoothing_window: 100,
            success_window: 50,
            usage_window: 2_000,
            trajectory_every: 10,
            eval_episodes: 100,
            switch: SwitchConfig::default(),
            baseline: ControlVariatesConfig::default(),
            turnoff: TurnOffConfig::default(),
            reward: RewardConfig::default(),
            bounds: ActionBounds::default(),
            pid: PidConfig::default(),
            oa: OaConfig::default(),
            ddpg: DdpgConfig::default(),
            replay: ReplayConfig::default(),
        }
    }
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 11] = [
    "sguidance",
    "vanilla",
    "ddpg_only",
    "ddpg_pid",
    "ddpg_oa",
    "uniform",
    "argmax",
    "softmax",
    "sb2",
    "no_cv",
    "turnoff",
];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self {
            name: name.to_string(),
            ..Self::default()
        };
        let with_controllers = |c: &[ControllerId]| Self {
            controllers: c.to_vec(),
            ..base.clone()
        };
        let with_switch = |f: &dyn Fn(&mut SwitchConfig)| {
            let mut cfg = base.clone();
            f(&mut cfg.switch);
            cfg
        };
        Some(match name {
            "sguidance" => base.clone(),
            "vanilla" => Self {
                engine: Engine::Vanilla,
                controllers: vec![ControllerId::Ddpg],
                ..base.clone()
            },
            // Same controller set as vanilla, but run through the switch loop.
            "ddpg_only" => with_controllers(&[ControllerId::Ddpg]),
            "ddpg_pid" => with_controllers(&[ControllerId::Ddpg, ControllerId::Pid]),
            "ddpg_oa" => with_controllers(&[ControllerId::Ddpg, ControllerId::Oa]),
            "uniform" => with_switch(&|s| s.construction = Construction::Uniform),
            "argmax" => with_switch(&|s| s.decode = Decode::Argmax),
            "softmax" => with_switch(&|s| s.construction = Construction::Softmax),
            "sb2" => with_switch(&|s| s.order = BreakOrder::DdpgOaPid),
            "no_cv" => Self {
                control_variates: false,
                ..base.clone()
            },
            "turnoff" => Self {
                turnoff: TurnOffConfig {
                    enabled: true,
                    ..TurnOffConfig::default()
                },
                // Usage takes longer than the ablation budget to fall below the threshold.
                total_steps: 100_000,
                ..base.clone()
            },
            _ => return None,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Control steps per switch tick.
    pub fn hold_steps(&self) -> usize {
        (self.control_frequency / self.switch_frequency).round() as usize
    }

    pub fn resolve_world(&self) -> Result<World, HarnessError> {
        match World::named(&self.world) {
            Some(w) => Ok(w),
            None => Ok(World::load(Path::new(&self.world))?),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !self.controllers.contains(&ControllerId::Ddpg) {
            return bad("the controller set must contain ddpg".into());
        }
        if self.engine == Engine::Vanilla && self.controllers != [ControllerId::Ddpg] {
            return bad("the vanilla engine runs ddpg alone".into());
        }
        if !(self.control_frequency > 0.0 && self.switch_frequency > 0.0) {
            return bad("frequencies must be positive".into());
        }
        let ratio = self.control_frequency / self.switch_frequency;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!(
                "control frequency {} is not an integer multiple of switch frequency {}",
                self.control_frequency, self.switch_frequency
            ));
        }
        for (what, v) in [
            ("step_budget", self.step_budget),
            ("checkpoint_every", self.checkpoint_every),
            ("smoothing_window", self.smoothing_window),
            ("success_window", self.success_window),
            ("usage_window", self.usage_window),
            ("ddpg.batch_size", self.ddpg.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{what} must be positive"));
            }
        }
        if !self.reward.is_valid() {
            return bad("reward: crash < 0 < reach, step_cost > 0 and 0 < gamma < 1 required".into());
        }
        if !self.bounds.is_valid() {
            return bad("action bounds must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.turnoff.threshold) {
            return bad("turn-off threshold must lie in [0, 1]".into());
        }
        self.resolve_world()?;
        Ok(())
    }
}
