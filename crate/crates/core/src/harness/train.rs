use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Engine, ExperimentConfig};
use super::metrics::{EpisodeMetrics, RunMetrics, Tracker};
use super::{heuristic_action, HarnessError};
use crate::controllers::{Action, AgentCheckpoint, ControllerId, DdpgAgent};
use crate::replay::{PrioritizedBuffer, Transition};
use crate::sim::{Env, Event, Observation, TrajectoryRecord, World};
use crate::switch::{
    reinforce_update, ControlVariates, EpisodeTrace, SwitchPolicy, TraceStep, TurnOff, TurnOffState, UsageStats,
};

pub const RUN_CHECKPOINT_VERSION: u32 = 1;

/// Independent random streams of one run.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Init = 1,
    Env = 2,
    Noise = 3,
    Replay = 4,
    SwitchInit = 5,
    Switch = 6,
    TurnOff = 7,
    Eval = 8,
}

pub(crate) fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunCheckpoint {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub step: usize,
    pub agent: AgentCheckpoint,
    pub switch: Option<SwitchPolicy>,
}

impl RunCheckpoint {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.format_version != RUN_CHECKPOINT_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported run checkpoint version {}",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}

/// Per-step record kept when auditing is switched on.
#[derive(Debug, Clone, PartialEq)]
pub struct StepAudit {
    pub step: usize,
    pub episode_step: usize,
    /// True on steps where the switch made a fresh decision.
    pub tick: bool,
    pub decision: ControllerId,
    pub executed_by: ControllerId,
    pub proposal: Action,
    pub executed: Action,
    pub stored: Action,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Directory receiving the run's output files.
    pub out: Option<PathBuf>,
    pub audit: bool,
}

impl TrainOptions {
    pub fn to_dir(out: impl Into<PathBuf>) -> Self {
        Self {
            out: Some(out.into()),
            audit: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub checkpoint: RunCheckpoint,
    /// Snapshot taken when the heuristic anneal started.
    pub pre_anneal: Option<RunCheckpoint>,
    pub audit: Vec<StepAudit>,
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    #[serde(flatten)]
    record: &'a TrajectoryRecord,
    controller: ControllerId,
}

struct Sinks {
    dir: Option<PathBuf>,
    trajectory: Option<BufWriter<File>>,
    switch: Option<BufWriter<File>>,
}

fn create(path: PathBuf) -> Result<BufWriter<File>, HarnessError> {
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(dir: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    }
}

impl Sinks {
    fn open(dir: Option<&Path>) -> Result<Self, HarnessError> {
        let Some(dir) = dir else {
            return Ok(Self {
                dir: None,
                trajectory: None,
                switch: None,
            });
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            trajectory: Some(create(dir.join("trajectory.jsonl"))?),
            switch: Some(create(dir.join("switch.jsonl"))?),
        })
    }

    fn line<T: Serialize>(w: &mut Option<BufWriter<File>>, value: &T) -> Result<(), HarnessError> {
        if let Some(w) = w {
            serde_json::to_writer(&mut *w, value)?;
            w.write_all(b"\n").map_err(|source| HarnessError::Io {
                path: "log".into(),
                source,
            })?;
        }
        Ok(())
    }

    fn finish(mut self, output: &RunOutput, config: &ExperimentConfig) -> Result<(), HarnessError> {
        let Some(dir) = self.dir.take() else {
            return Ok(());
        };
        for w in [self.trajectory.as_mut(), self.switch.as_mut()].into_iter().flatten() {
            w.flush().map_err(io_err(&dir))?;
        }
        write_file(&dir.join("curves.csv"), &output.metrics.curves_csv())?;
        write_file(&dir.join("episodes.csv"), &output.metrics.episodes_csv())?;
        write_file(&dir.join("config.toml"), &config.to_toml())?;
        write_file(
            &dir.join("checkpoint.json"),
            &serde_json::to_string(&output.checkpoint)?,
        )?;
        if let Some(pre) = &output.pre_anneal {
            write_file(&dir.join("checkpoint_pre_anneal.json"), &serde_json::to_string(pre)?)?;
        }
        Ok(())
    }
}

/// DDPG agent, replay buffer and the random streams they consume.
struct Learner {
    agent: DdpgAgent,
    replay: PrioritizedBuffer,
    noise_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    warmup: usize,
    total_steps: usize,
}

impl Learner {
    fn new(config: &ExperimentConfig, state_dim: usize, seed: u64) -> Result<Self, HarnessError> {
        let agent = DdpgAgent::new(
            state_dim,
            config.bounds,
            config.ddpg.clone(),
            &mut stream(seed, Stream::Init),
        );
        Ok(Self {
            agent,
            replay: PrioritizedBuffer::new(config.replay.clone())?,
            noise_rng: stream(seed, Stream::Noise),
            replay_rng: stream(seed, Stream::Replay),
            warmup: config.warmup.max(config.ddpg.batch_size),
            total_steps: config.total_steps,
        })
    }

    fn progress(&self, step: usize) -> f64 {
        step as f64 / self.total_steps.max(1) as f64
    }

    fn start_episode(&mut self) {
        self.agent.noise_mut().reset();
    }

    /// Exploratory actor proposal; OU sigma is annealed over the budget.
    fn propose(&mut self, x: &[f64], step: usize) -> Result<Action, HarnessError> {
        let cfg = self.agent.config();
        let sigma = cfg.ou_sigma + (cfg.ou_sigma_final - cfg.ou_sigma) * self.progress(step);
        self.agent.set_noise_sigma(sigma);
        Ok(self.agent.propose(x, true, &mut self.noise_rng)?)
    }

    /// Stores the transition, then one critic, actor and target update once warm.
    fn observe(&mut self, t: Transition, step: usize) -> Result<(), HarnessError> {
        self.replay.push(t);
        if self.replay.len() < self.warmup {
            return Ok(());
        }
        self.replay.set_progress(self.progress(step));
        let batch = self.agent.config().batch_size;
        let tau = self.agent.config().tau;
        let (refs, td) = {
            let sample = self.replay.sample(batch, &mut self.replay_rng)?;
            let td = self.agent.critic_update(&sample.transitions, &sample.weights)?;
            self.agent.actor_update(&sample.transitions)?;
            (sample.refs, td)
        };
        self.agent.soft_update(tau);
        self.replay.update_priorities(&refs, &td);
        Ok(())
    }
}

fn state_dim(world: &World) -> usize {
    Observation::feature_dim(world.lidar.history, world.lidar.beams)
}

fn make_env(config: &ExperimentConfig, world: World) -> Env {
    Env::new(
        world,
        config.bounds,
        config.reward,
        config.control_frequency,
        config.step_budget,
    )
}

fn features(env: &Env, obs: &Observation) -> Vec<f64> {
    obs.features(env.bounds(), env.world().lidar.max_range)
}

fn checkpoint(
    config: &ExperimentConfig,
    seed: u64,
    step: usize,
    agent: &DdpgAgent,
    switch: Option<&SwitchPolicy>,
) -> RunCheckpoint {
    RunCheckpoint {
        format_version: RUN_CHECKPOINT_VERSION,
        config: config.clone(),
        seed,
        step,
        agent: agent.checkpoint(),
        switch: switch.cloned(),
    }
}

fn trajectory_record(env: &Env, episode: usize, step: usize, reward: f64, event: Event) -> TrajectoryRecord {
    let s = env.state();
    TrajectoryRecord {
        episode,
        step,
        time: step as f64 * env.dt(),
        x: s.pose.x,
        y: s.pose.y,
        heading: s.pose.heading,
        v: s.v,
        omega: s.omega,
        reward,
        event,
    }
}

/// Trains one `(config, seed)` run, writing output files when a directory is given.
pub fn train(config: &ExperimentConfig, seed: u64, options: &TrainOptions) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let result = match config.engine {
        Engine::Vanilla => train_vanilla(config, seed, options),
        Engine::Switched => train_switched(config, seed, options),
    };
    result.map_err(|e| HarnessError::Run {
        name: config.name.clone(),
        seed,
        source: Box::new(e),
    })
}

/// Controllers arbitrated by the switch at the switching frequency.
fn train_switched(config: &ExperimentConfig, seed: u64, options: &TrainOptions) -> Result<RunOutput, HarnessError> {
    let clock = Instant::now();
    let mut sinks = Sinks::open(options.out.as_deref())?;
    let world = config.resolve_world()?;
    let dim = state_dim(&world);
    let beam_angles = world.lidar.beam_angles();
    let mut env = make_env(config, world);
    let mut learner = Learner::new(config, dim, seed)?;
    let mut switch_init = stream(seed, Stream::SwitchInit);
    let mut policy = SwitchPolicy::new(dim, &config.controllers, &config.switch, &mut switch_init)?;
    let mut variates = (config.control_variates && policy.network().is_some())
        .then(|| ControlVariates::new(dim, &config.baseline, &mut switch_init));
    let mut env_rng = stream(seed, Stream::Env);
    let mut switch_rng = stream(seed, Stream::Switch);
    let mut turnoff_rng = stream(seed, Stream::TurnOff);
    let mut usage = UsageStats::new(config.usage_window);
    let mut turnoff = TurnOff::new(config.turnoff.clone());
    let mut tracker = Tracker::new(config.smoothing_window, config.success_window);
    let hold = config.hold_steps();
    let gamma = config.reward.gamma;

    let mut metrics = RunMetrics::default();
    let mut pre_anneal = None;
    let mut audit = Vec::new();
    let mut step = 0;
    let mut episode = 0;
    while step < config.total_steps {
        let mut obs = env.reset(&mut env_rng)?;
        let mut x = features(&env, &obs);
        learner.start_episode();
        let mut trace = EpisodeTrace::new(episode);
        let log_traj = config.trajectory_every > 0 && episode % config.trajectory_every == 0;
        let mut decision = None;
        let mut undiscounted = 0.0;
        let mut k = 0;
        let event = loop {
            let tick = k % hold == 0;
            if tick {
                let xi = policy.distribution(&x)?;
                let d = policy.decide(&xi, &mut switch_rng)?;
                usage.record(d.controller);
                trace.steps.push(TraceStep {
                    observation: x.clone(),
                    xi,
                    decision: d.index,
                    log_prob: d.log_prob,
                });
                decision = Some(d);
            }
            let d = decision.expect("first step is a tick");
            let proposal = learner.propose(&x, step)?;
            let heuristic = heuristic_action(d.controller, &obs, &beam_angles, proposal, config);
            let before = turnoff.state();
            turnoff.update(&usage, step);
            if before == TurnOffState::Active && turnoff.state() != TurnOffState::Active {
                metrics.anneal_start = Some(step);
                pre_anneal = Some(checkpoint(config, seed, step, &learner.agent, Some(&policy)));
            }
            let (executed_by, action) = turnoff.filter(d.controller, proposal, heuristic, step, &mut turnoff_rng);
            let out = env.step(action);
            let next_x = features(&env, &out.observation);
            let executed = action.clamped(env.bounds());
            if options.audit {
                audit.push(StepAudit {
                    step,
                    episode_step: k,
                    tick,
                    decision: d.controller,
                    executed_by,
                    proposal,
                    executed,
                    stored: executed,
                });
            }
            let transition = Transition {
                state: std::mem::take(&mut x),
                action: executed,
                reward: out.reward,
                next_state: next_x.clone(),
                terminal: out.event.is_terminal(),
            };
            if log_traj {
                let record = trajectory_record(&env, episode, k, out.reward, out.event);
                Sinks::line(
                    &mut sinks.trajectory,
                    &TrajectoryLine {
                        record: &record,
                        controller: executed_by,
                    },
                )?;
            }
            learner.observe(transition, step + 1)?;
            if options.audit {
                if let (Some(last), Some(t)) = (audit.last_mut(), learner.replay.newest()) {
                    last.stored = t.action;
                }
            }
            trace.rewards.push(out.reward);
            undiscounted += out.reward;
            step += 1;
            k += 1;
            if step % config.checkpoint_every == 0 {
                metrics.checkpoints.push(tracker.row(step, usage.heuristic_fraction()));
            }
            if out.event.is_done() {
                break Some(out.event);
            }
            if step >= config.total_steps {
                break None;
            }
            obs = out.observation;
            x = next_x;
        };
        // An episode cut short by the end of the budget is not scored.
        let Some(event) = event else { break };
        trace.close(gamma, config.switch.discounted_return);
        if policy.network().is_some() {
            let report = reinforce_update(&mut policy, variates.as_mut(), std::slice::from_ref(&trace))?;
            for record in report.records(&policy, &trace, 0) {
                Sinks::line(&mut sinks.switch, &record)?;
            }
        } else {
            for (tick, s) in trace.steps.iter().enumerate() {
                let record = crate::switch::SwitchRecord {
                    episode,
                    tick,
                    xi: s.xi.clone(),
                    decision: s.decision,
                    controller: policy.controllers()[s.decision],
                    signal: 0.0,
                };
                Sinks::line(&mut sinks.switch, &record)?;
            }
        }
        tracker.push(undiscounted, event);
        metrics.episodes.push(EpisodeMetrics {
            episode,
            end_step: step,
            ret: undiscounted,
            length: k,
            event,
        });
        episode += 1;
    }
    metrics.total_steps = step;
    metrics.wall_seconds = clock.elapsed().as_secs_f64();
    let output = RunOutput {
        metrics,
        checkpoint: checkpoint(config, seed, step, &learner.agent, Some(&policy)),
        pre_anneal,
        audit,
    };
    sinks.finish(&output, config)?;
    Ok(output)
}

/// Plain DDPG: every step executes the actor's exploratory proposal.
pub fn train_vanilla(config: &ExperimentConfig, seed: u64, options: &TrainOptions) -> Result<RunOutput, HarnessError> {
    let clock = Instant::now();
    let mut sinks = Sinks::open(options.out.as_deref())?;
    let world = config.resolve_world()?;
    let dim = state_dim(&world);
    let mut env = make_env(config, world);
    let mut learner = Learner::new(config, dim, seed)?;
    let mut env_rng = stream(seed, Stream::Env);
    let mut tracker = Tracker::new(config.smoothing_window, config.success_window);

    let mut metrics = RunMetrics::default();
    let mut audit = Vec::new();
    let mut step = 0;
    let mut episode = 0;
    while step < config.total_steps {
        let obs = env.reset(&mut env_rng)?;
        let mut x = features(&env, &obs);
        learner.start_episode();
        let log_traj = config.trajectory_every > 0 && episode % config.trajectory_every == 0;
        let mut ret = 0.0;
        let mut k = 0;
        let event = loop {
            let proposal = learner.propose(&x, step)?;
            let out = env.step(proposal);
            let next_x = features(&env, &out.observation);
            let executed = proposal.clamped(env.bounds());
            if options.audit {
                audit.push(StepAudit {
                    step,
                    episode_step: k,
                    tick: false,
                    decision: ControllerId::Ddpg,
                    executed_by: ControllerId::Ddpg,
                    proposal,
                    executed,
                    stored: executed,
                });
            }
            if log_traj {
                let record = trajectory_record(&env, episode, k, out.reward, out.event);
                Sinks::line(
                    &mut sinks.trajectory,
                    &TrajectoryLine {
                        record: &record,
                        controller: ControllerId::Ddpg,
                    },
                )?;
            }
            learner.observe(
                Transition {
                    state: std::mem::take(&mut x),
                    action: executed,
                    reward: out.reward,
                    next_state: next_x.clone(),
                    terminal: out.event.is_terminal(),
                },
                step + 1,
            )?;
            ret += out.reward;
            step += 1;
            k += 1;
            if step % config.checkpoint_every == 0 {
                metrics.checkpoints.push(tracker.row(step, 0.0));
            }
            if out.event.is_done() {
                break Some(out.event);
            }
            if step >= config.total_steps {
                break None;
            }
            x = next_x;
        };
        let Some(event) = event else { break };
        tracker.push(ret, event);
        metrics.episodes.push(EpisodeMetrics {
            episode,
            end_step: step,
            ret,
            length: k,
            event,
        });
        episode += 1;
    }
    metrics.total_steps = step;
    metrics.wall_seconds = clock.elapsed().as_secs_f64();
    let output = RunOutput {
        metrics,
        checkpoint: checkpoint(config, seed, step, &learner.agent, None),
        pre_anneal: None,
        audit,
    };
    sinks.finish(&output, config)?;
    Ok(output)
}
