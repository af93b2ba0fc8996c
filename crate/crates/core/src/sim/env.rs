use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{raycast, wrap_angle, ActionBounds, RobotState, SimError, World};
use crate::controllers::Action;

const GOAL_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub crash: f64,
    pub reach: f64,
    /// Per-step time penalty `C`.
    pub step_cost: f64,
    pub gamma: f64,
    /// Use the heading change `omega * dt` inside the cosine instead of the rate.
    #[serde(default)]
    pub use_omega_dt: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            crash: -10.0,
            reach: 10.0,
            step_cost: 0.05,
            gamma: 0.99,
            use_omega_dt: false,
        }
    }
}

impl RewardConfig {
    pub fn is_valid(&self) -> bool {
        self.crash < 0.0 && self.reach > 0.0 && self.step_cost > 0.0 && self.gamma > 0.0 && self.gamma < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Running,
    Crashed,
    Reached,
    Timeout,
}

impl Event {
    pub fn is_done(self) -> bool {
        self != Event::Running
    }

    /// Crash and reach end the MDP; a timeout only truncates it.
    pub fn is_terminal(self) -> bool {
        matches!(self, Event::Crashed | Event::Reached)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Event::Running => "running",
            Event::Crashed => "crashed",
            Event::Reached => "reached",
            Event::Timeout => "timeout",
        }
    }
}

/// Stacked lidar scans (oldest first), current velocities and the goal in the robot frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub scans: Vec<Vec<f64>>,
    pub velocity: (f64, f64),
    pub goal_local: (f64, f64),
}

/// Goal coordinates are clipped to this many lidar ranges in the feature vector.
const GOAL_FEATURE_CLIP: f64 = 2.0;

impl Observation {
    pub fn latest_scan(&self) -> &[f64] {
        self.scans.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn feature_dim(history: usize, beams: usize) -> usize {
        history * beams + 7
    }

    /// Network input: scans (newest first) scaled by the lidar range, velocities
    /// scaled by their bounds, then the goal in Cartesian and polar form.
    pub fn features(&self, bounds: &ActionBounds, max_range: f64) -> Vec<f64> {
        let beams = self.scans.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(Self::feature_dim(self.scans.len(), beams));
        for scan in self.scans.iter().rev() {
            out.extend(scan.iter().map(|r| r / max_range));
        }
        out.push(self.velocity.0 / bounds.v_max);
        out.push(self.velocity.1 / bounds.omega_max);
        let (gx, gy) = self.goal_local;
        let clip = |v: f64| (v / max_range).clamp(-GOAL_FEATURE_CLIP, GOAL_FEATURE_CLIP);
        let dist = gx.hypot(gy);
        let bearing = gy.atan2(gx);
        out.push(clip(gx));
        out.push(clip(gy));
        out.push(clip(dist));
        out.push(bearing.cos());
        out.push(bearing.sin());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub event: Event,
    pub d_prev: f64,
    pub d_curr: f64,
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode: usize,
    pub step: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub omega: f64,
    pub reward: f64,
    pub event: Event,
}

/// Unicycle integration with instantaneous velocity changes.
pub fn step_dynamics(state: &RobotState, action: Action, dt: f64) -> RobotState {
    let heading = wrap_angle(state.pose.heading + action.omega() * dt);
    let (s, c) = heading.sin_cos();
    let mut next = *state;
    next.pose.heading = heading;
    next.pose.x += action.v() * dt * c;
    next.pose.y += action.v() * dt * s;
    next.v = action.v();
    next.omega = action.omega();
    next
}

pub fn compute_reward(cfg: &RewardConfig, d_prev: f64, d_curr: f64, omega: f64, dt: f64, event: Event) -> f64 {
    match event {
        Event::Crashed => cfg.crash,
        Event::Reached => cfg.reach,
        Event::Running | Event::Timeout => {
            let turn = if cfg.use_omega_dt { omega * dt } else { omega };
            (d_prev - d_curr) * turn.cos() - cfg.step_cost
        }
    }
}

fn sample_goal<R: Rng + ?Sized>(world: &World, rng: &mut R) -> Result<(f64, f64), SimError> {
    let a = &world.arena;
    for _ in 0..GOAL_ATTEMPTS {
        let x = rng.random_range(a.min_x..a.max_x);
        let y = rng.random_range(a.min_y..a.max_y);
        if x.hypot(y) >= world.min_goal_distance && !world.collides(x, y) {
            return Ok((x, y));
        }
    }
    Err(SimError::GoalSampling(GOAL_ATTEMPTS))
}

/// Robot at the origin with a uniform heading in `(-pi, pi]`, a goal sampled
/// uniformly over free space beyond the minimum spawn distance, and a scan
/// stack filled with copies of the first scan.
pub fn reset<R: Rng + ?Sized>(
    world: &World,
    _bounds: &ActionBounds,
    rng: &mut R,
) -> Result<(RobotState, (f64, f64), Observation), SimError> {
    let heading = PI - 2.0 * PI * rng.random::<f64>();
    let state = RobotState::at_origin(heading);
    let goal = sample_goal(world, rng)?;
    let scan = raycast(world, &state.pose, &world.lidar.beam_angles(), world.lidar.max_range);
    let obs = Observation {
        scans: vec![scan; world.lidar.history],
        velocity: (0.0, 0.0),
        goal_local: state.to_local(goal),
    };
    Ok((state, goal, obs))
}

/// Episode-stateful wrapper around the world.
#[derive(Debug, Clone)]
pub struct Env {
    world: World,
    bounds: ActionBounds,
    reward: RewardConfig,
    dt: f64,
    step_budget: usize,
    beam_angles: Vec<f64>,
    state: RobotState,
    goal: (f64, f64),
    scans: VecDeque<Vec<f64>>,
    steps: usize,
}

impl Env {
    pub fn new(
        world: World,
        bounds: ActionBounds,
        reward: RewardConfig,
        control_frequency: f64,
        step_budget: usize,
    ) -> Self {
        let beam_angles = world.lidar.beam_angles();
        Self {
            world,
            bounds,
            reward,
            dt: 1.0 / control_frequency,
            step_budget,
            beam_angles,
            state: RobotState::at_origin(0.0),
            goal: (0.0, 0.0),
            scans: VecDeque::new(),
            steps: 0,
        }
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Observation, SimError> {
        let (state, goal, obs) = reset(&self.world, &self.bounds, rng)?;
        self.state = state;
        self.goal = goal;
        self.scans = obs.scans.iter().cloned().collect();
        self.steps = 0;
        Ok(obs)
    }

    /// Places the robot and goal explicitly (scan stack refilled, step count cleared).
    pub fn place(&mut self, state: RobotState, goal: (f64, f64)) -> Observation {
        self.state = state;
        self.goal = goal;
        let scan = self.scan();
        self.scans = std::iter::repeat_n(scan, self.world.lidar.history).collect();
        self.steps = 0;
        self.observation()
    }

    fn scan(&self) -> Vec<f64> {
        raycast(
            &self.world,
            &self.state.pose,
            &self.beam_angles,
            self.world.lidar.max_range,
        )
    }

    pub fn observation(&self) -> Observation {
        Observation {
            scans: self.scans.iter().cloned().collect(),
            velocity: (self.state.v, self.state.omega),
            goal_local: self.state.to_local(self.goal),
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn goal(&self) -> (f64, f64) {
        self.goal
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_budget(&self) -> usize {
        self.step_budget
    }

    pub fn step(&mut self, action: Action) -> StepOutcome {
        env_step(self, action)
    }
}

/// Advances one control interval: integrate, then crash, reach and timeout
/// checks in that order of precedence.
pub fn env_step(env: &mut Env, action: Action) -> StepOutcome {
    let action = action.clamped(&env.bounds);
    let d_prev = env.state.distance_to(env.goal);
    env.state = step_dynamics(&env.state, action, env.dt);
    env.steps += 1;
    let d_curr = env.state.distance_to(env.goal);
    let event = if env.world.collides(env.state.pose.x, env.state.pose.y) {
        Event::Crashed
    } else if d_curr < env.world.goal_radius {
        Event::Reached
    } else if env.steps >= env.step_budget {
        Event::Timeout
    } else {
        Event::Running
    };
    let reward = compute_reward(&env.reward, d_prev, d_curr, action.omega(), env.dt, event);
    let scan = env.scan();
    env.scans.pop_front();
    env.scans.push_back(scan);
    StepOutcome {
        observation: env.observation(),
        reward,
        event,
        d_prev,
        d_curr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Pose, Rect};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(world: World) -> Env {
        Env::new(world, ActionBounds::default(), RewardConfig::default(), 5.0, 300)
    }

    fn act(v: f64, w: f64) -> Action {
        Action::new(
            v,
            w,
            &ActionBounds {
                v_max: 10.0,
                omega_max: 10.0,
            },
        )
    }

    #[test]
    fn straight_line_dynamics() {
        let s = step_dynamics(&RobotState::at_origin(0.0), act(1.0, 0.0), 0.2);
        assert!((s.pose.x - 0.2).abs() < 1e-15 && s.pose.y == 0.0);
    }

    #[test]
    fn pure_rotation_dynamics() {
        let s = step_dynamics(&RobotState::at_origin(0.0), act(0.0, PI), 0.2);
        assert!((s.pose.heading - 0.2 * PI).abs() < 1e-15);
        assert_eq!((s.pose.x, s.pose.y), (0.0, 0.0));
    }

    #[test]
    fn unit_arc_matches_closed_form() {
        // v = omega = 1 traces the unit circle: after t = 1, (sin 1, 1 - cos 1).
        let mut s = RobotState::at_origin(0.0);
        for _ in 0..100 {
            s = step_dynamics(&s, act(1.0, 1.0), 0.01);
        }
        let (ex, ey) = (1f64.sin(), 1.0 - 1f64.cos());
        assert!((s.pose.x - ex).hypot(s.pose.y - ey) < 1e-2);
    }

    #[test]
    fn reward_cases() {
        let cfg = RewardConfig::default();
        assert_eq!(compute_reward(&cfg, 1.0, 1.0, 0.0, 0.2, Event::Crashed), -10.0);
        assert_eq!(compute_reward(&cfg, 1.0, 1.0, 0.0, 0.2, Event::Reached), 10.0);
        assert!((compute_reward(&cfg, 1.3, 1.3, 0.0, 0.2, Event::Running) + 0.05).abs() < 1e-15);
        assert!((compute_reward(&cfg, 2.0, 1.5, 0.0, 0.2, Event::Running) - 0.45).abs() < 1e-15);
        // literal cos(omega) versus cos(omega * dt)
        let literal = compute_reward(&cfg, 2.0, 1.5, 1.0, 0.2, Event::Running);
        assert!((literal - (0.5 * 1f64.cos() - 0.05)).abs() < 1e-15);
        let alt = RewardConfig {
            use_omega_dt: true,
            ..cfg
        };
        let scaled = compute_reward(&alt, 2.0, 1.5, 1.0, 0.2, Event::Running);
        assert!((scaled - (0.5 * 0.2f64.cos() - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn reset_in_open_world_is_in_arena() {
        let w = World::open();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let (s, goal, obs) = reset(&w, &ActionBounds::default(), &mut rng).unwrap();
            assert!(w.arena.contains(goal.0, goal.1));
            assert!(s.pose.heading > -PI && s.pose.heading <= PI);
            assert_eq!(obs.scans.len(), 3);
            assert_eq!(obs.scans[0], obs.scans[2]);
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let w = World::four_obstacles();
        let a = reset(&w, &ActionBounds::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = reset(&w, &ActionBounds::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn goals_never_inside_obstacles() {
        let w = World::four_obstacles();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let (_, (gx, gy), _) = reset(&w, &ActionBounds::default(), &mut rng).unwrap();
            assert!(w.obstacles.iter().all(|o| !o.contains(gx, gy)));
            assert!(gx.hypot(gy) >= w.min_goal_distance);
        }
    }

    #[test]
    fn degenerate_world_fails_goal_sampling() {
        let mut w = World::open();
        w.min_goal_distance = 100.0;
        let err = reset(&w, &ActionBounds::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(SimError::GoalSampling(_))));
    }

    #[test]
    fn driving_into_obstacle_crashes() {
        let mut w = World::open();
        w.obstacles.push(Rect::new(0.5, -1.0, 1.5, 1.0));
        let mut e = env(w);
        let start = RobotState {
            pose: Pose {
                x: 0.25,
                y: 0.0,
                heading: 0.0,
            },
            v: 0.0,
            omega: 0.0,
        };
        e.place(start, (-2.0, 0.0));
        let out = e.step(Action::new(0.5, 0.0, e.bounds()));
        assert_eq!(out.event, Event::Crashed);
        assert_eq!(out.reward, -10.0);
    }

    #[test]
    fn stepping_into_goal_reaches() {
        let mut e = env(World::open());
        e.place(RobotState::at_origin(0.0), (1.35, 0.0));
        let mut last = None;
        for _ in 0..20 {
            let out = e.step(Action::new(0.5, 0.0, e.bounds()));
            if out.event.is_done() {
                last = Some(out);
                break;
            }
        }
        let out = last.unwrap();
        assert_eq!(out.event, Event::Reached);
        assert_eq!(out.reward, 10.0);
        assert!(out.d_curr < 0.3);
    }

    #[test]
    fn free_step_reward_matches_recomputed_distances() {
        let mut e = env(World::four_obstacles());
        let goal = (-3.0, 0.5);
        e.place(RobotState::at_origin(2.5), goal);
        let before = *e.state();
        let a = Action::new(0.4, -0.3, e.bounds());
        let out = e.step(a);
        assert_eq!(out.event, Event::Running);
        let after = *e.state();
        let d0 = (goal.0 - before.pose.x).hypot(goal.1 - before.pose.y);
        let d1 = (goal.0 - after.pose.x).hypot(goal.1 - after.pose.y);
        let expected = (d0 - d1) * (-0.3f64).cos() - 0.05;
        assert!((out.reward - expected).abs() < 1e-12);
        // the newest scan was pushed, the oldest dropped
        assert_eq!(out.observation.scans.len(), 3);
        assert_ne!(out.observation.scans[2], out.observation.scans[0]);
    }

    #[test]
    fn timeout_after_budget() {
        let mut e = Env::new(World::open(), ActionBounds::default(), RewardConfig::default(), 5.0, 3);
        e.place(RobotState::at_origin(0.0), (-2.0, 2.0));
        let events: Vec<Event> = (0..3)
            .map(|_| e.step(Action::new(0.0, 1.0, e.bounds())).event)
            .collect();
        assert_eq!(events, vec![Event::Running, Event::Running, Event::Timeout]);
    }

    #[test]
    fn feature_vector_layout() {
        let w = World::four_obstacles();
        let mut e = env(w);
        let obs = e.reset(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let f = obs.features(e.bounds(), 5.0);
        assert_eq!(f.len(), Observation::feature_dim(3, 10));
        assert!(f[..30].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn seeded_episodes_are_bit_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let mut e = env(World::four_obstacles());
            e.reset(&mut rng).unwrap();
            let mut log = Vec::new();
            for k in 0..200 {
                let a = Action::new(0.5, ((k as f64) * 0.37).sin(), e.bounds());
                let out = e.step(a);
                log.push((
                    e.state().pose.x.to_bits(),
                    e.state().pose.y.to_bits(),
                    out.reward.to_bits(),
                ));
                log.extend(out.observation.latest_scan().iter().map(|r| (r.to_bits(), 0, 0)));
                if out.event.is_done() {
                    e.reset(&mut rng).unwrap();
                }
            }
            log
        };
        assert_eq!(run(), run());
    }
}
