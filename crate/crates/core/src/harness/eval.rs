use std::f64::consts::FRAC_PI_2;

use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::train::{stream, RunCheckpoint, Stream};
use super::{heuristic_action, HarnessError};
use crate::controllers::{oa_omega, pid_action, Action, DdpgAgent, OaConfig, PidConfig};
use crate::sim::{ActionBounds, Env, Event, Observation, World};
use crate::switch::{Decision, SwitchPolicy};

/// Anything that can drive the robot through an episode.
pub trait Pilot {
    fn reset(&mut self) {}

    /// Action for control step `k` of the current episode.
    fn act(&mut self, env: &Env, obs: &Observation, k: usize) -> Result<Action, HarnessError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub crash_rate: f64,
    pub mean_return: f64,
    pub returns: Vec<f64>,
}

/// Runs `episodes` episodes; the goal sequence depends only on `seed`.
pub fn evaluate(
    pilot: &mut dyn Pilot,
    config: &ExperimentConfig,
    world: World,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let mut env = Env::new(
        world,
        config.bounds,
        config.reward,
        config.control_frequency,
        config.step_budget,
    );
    let mut rng = stream(seed, Stream::Eval);
    let mut returns = Vec::with_capacity(episodes);
    let (mut reached, mut crashed) = (0, 0);
    for _ in 0..episodes {
        let mut obs = env.reset(&mut rng)?;
        pilot.reset();
        let mut ret = 0.0;
        let mut k = 0;
        loop {
            let action = pilot.act(&env, &obs, k)?;
            let out = env.step(action);
            ret += out.reward;
            k += 1;
            match out.event {
                Event::Running => obs = out.observation,
                Event::Reached => {
                    reached += 1;
                    break;
                }
                Event::Crashed => {
                    crashed += 1;
                    break;
                }
                Event::Timeout => break,
            }
        }
        returns.push(ret);
    }
    let n = episodes.max(1) as f64;
    Ok(EvalReport {
        episodes,
        success_rate: reached as f64 / n,
        crash_rate: crashed as f64 / n,
        mean_return: returns.iter().sum::<f64>() / n,
        returns,
    })
}

/// Greedy trained agent, optionally with its switch and heuristic controllers.
pub struct TrainedPilot {
    agent: DdpgAgent,
    switch: Option<SwitchPolicy>,
    config: ExperimentConfig,
    beam_angles: Vec<f64>,
    hold: usize,
    decision: Option<Decision>,
    rng: ChaCha8Rng,
}

impl TrainedPilot {
    /// With `isolate_ddpg` every action comes from the actor and the switch is ignored.
    pub fn from_checkpoint(
        ckpt: &RunCheckpoint,
        world: &World,
        isolate_ddpg: bool,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let agent = DdpgAgent::from_checkpoint(ckpt.agent.clone())?;
        let dim = Observation::feature_dim(world.lidar.history, world.lidar.beams);
        if agent.state_dim() != dim {
            return Err(HarnessError::Config(format!(
                "checkpoint expects {} observation features, world provides {dim}",
                agent.state_dim()
            )));
        }
        let switch = if isolate_ddpg { None } else { ckpt.switch.clone() };
        Ok(Self {
            agent,
            switch,
            config: ckpt.config.clone(),
            beam_angles: world.lidar.beam_angles(),
            hold: ckpt.config.hold_steps(),
            decision: None,
            rng: stream(seed, Stream::Switch),
        })
    }
}

impl Pilot for TrainedPilot {
    fn reset(&mut self) {
        self.decision = None;
    }

    fn act(&mut self, env: &Env, obs: &Observation, k: usize) -> Result<Action, HarnessError> {
        let x = obs.features(env.bounds(), env.world().lidar.max_range);
        let proposal = self.agent.propose(&x, false, &mut self.rng)?;
        let Some(switch) = &self.switch else {
            return Ok(proposal);
        };
        if k.is_multiple_of(self.hold) || self.decision.is_none() {
            let xi = switch.distribution(&x)?;
            self.decision = Some(switch.decide(&xi, &mut self.rng)?);
        }
        let c = self.decision.expect("decided above").controller;
        Ok(heuristic_action(c, obs, &self.beam_angles, proposal, &self.config))
    }
}

/// Loads a run checkpoint and evaluates it greedily.
pub fn evaluate_checkpoint(
    ckpt: &RunCheckpoint,
    world: Option<World>,
    episodes: usize,
    isolate_ddpg: bool,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    let world = match world {
        Some(w) => w,
        None => ckpt.config.resolve_world()?,
    };
    let mut pilot = TrainedPilot::from_checkpoint(ckpt, &world, isolate_ddpg, seed)?;
    evaluate(&mut pilot, &ckpt.config, world, episodes, seed)
}

/// Goal seeking with the proportional controller alone.
pub struct PidPilot {
    pub pid: PidConfig,
    pub bounds: ActionBounds,
}

impl Pilot for PidPilot {
    fn act(&mut self, _env: &Env, obs: &Observation, _k: usize) -> Result<Action, HarnessError> {
        Ok(pid_action(&self.pid, obs.goal_local, &self.bounds))
    }
}

/// Obstacle avoidance at a fixed cruise speed; never looks at the goal.
pub struct OaPilot {
    pub oa: OaConfig,
    pub cruise: f64,
    pub bounds: ActionBounds,
    pub beam_angles: Vec<f64>,
}

impl Pilot for OaPilot {
    fn act(&mut self, _env: &Env, obs: &Observation, _k: usize) -> Result<Action, HarnessError> {
        let omega = oa_omega(&self.oa, obs.latest_scan(), &self.beam_angles, self.bounds.omega_max);
        Ok(Action::new(self.cruise, omega, &self.bounds))
    }
}

/// Turns its back on the goal and drives until something stops it.
pub struct FleePilot {
    pub bounds: ActionBounds,
}

impl Pilot for FleePilot {
    fn act(&mut self, _env: &Env, obs: &Observation, _k: usize) -> Result<Action, HarnessError> {
        let (gx, gy) = obs.goal_local;
        let bearing = gy.atan2(gx);
        if bearing.abs() < FRAC_PI_2 {
            let turn = if gy >= 0.0 { -1.0 } else { 1.0 };
            return Ok(Action::new(0.0, turn * self.bounds.omega_max, &self.bounds));
        }
        let away = -bearing.signum() * (std::f64::consts::PI - bearing.abs());
        Ok(Action::new(
            self.bounds.v_max,
            away.clamp(-1.0, 1.0) * self.bounds.omega_max,
            &self.bounds,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{train, TrainOptions};

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::default()
    }

    #[test]
    fn scripted_pilot_always_arrives_in_open_world() {
        let c = cfg();
        let mut p = PidPilot {
            pid: c.pid,
            bounds: c.bounds,
        };
        let r = evaluate(&mut p, &c, World::open(), 100, 3).unwrap();
        assert_eq!(r.success_rate, 1.0);
        assert!(r.mean_return > 0.0);
    }

    #[test]
    fn fleeing_pilot_always_crashes() {
        let c = cfg();
        let mut p = FleePilot { bounds: c.bounds };
        let r = evaluate(&mut p, &c, World::four_obstacles(), 100, 4).unwrap();
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.crash_rate, 1.0);
        // crash penalty plus a little negative shaping on the way out
        assert!(
            r.mean_return < c.reward.crash && r.mean_return > c.reward.crash - 8.0,
            "{}",
            r.mean_return
        );
    }

    #[test]
    fn evaluation_is_seeded() {
        let c = cfg();
        let world = World::four_obstacles();
        let mut p = OaPilot {
            oa: c.oa,
            cruise: 0.3,
            bounds: c.bounds,
            beam_angles: world.lidar.beam_angles(),
        };
        let a = evaluate(&mut p, &c, world.clone(), 10, 9).unwrap();
        let b = evaluate(&mut p, &c, world, 10, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_dims_are_checked() {
        let c = ExperimentConfig {
            total_steps: 0,
            ..cfg()
        };
        let run = train(&c, 0, &TrainOptions::default()).unwrap();
        let mut world = World::four_obstacles();
        world.lidar.beams = 20;
        assert!(matches!(
            evaluate_checkpoint(&run.checkpoint, Some(world), 1, true, 0),
            Err(HarnessError::Config(_))
        ));
        let r = evaluate_checkpoint(&run.checkpoint, None, 5, false, 0).unwrap();
        assert_eq!(r.episodes, 5);
    }
}
