//! Kinematic 2D navigation world with a planar lidar.

mod env;
mod geometry;

pub use env::{
    compute_reward, env_step, reset, step_dynamics, Env, Event, Observation, RewardConfig, StepOutcome,
    TrajectoryRecord,
};
pub use geometry::{disk_hits_rect, raycast, raycast_beam};

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("world file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("world file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("no admissible goal found after {0} attempts")]
    GoalSampling(usize),
}

/// Axis-aligned rectangle in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.min_x + dx, self.min_y + dy, self.max_x + dx, self.max_y + dy)
    }

    fn is_proper(&self) -> bool {
        self.min_x < self.max_x
            && self.min_y < self.max_y
            && [self.min_x, self.min_y, self.max_x, self.max_y]
                .iter()
                .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LidarConfig {
    pub beams: usize,
    pub fov_deg: f64,
    pub max_range: f64,
    /// Number of stacked scans in an observation.
    pub history: usize,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 10,
            fov_deg: 180.0,
            max_range: 5.0,
            history: 3,
        }
    }
}

impl LidarConfig {
    /// Beam angles in the robot frame, evenly spread over the field of view.
    pub fn beam_angles(&self) -> Vec<f64> {
        let fov = self.fov_deg.to_radians();
        if self.beams == 1 {
            return vec![0.0];
        }
        let step = fov / (self.beams - 1) as f64;
        (0..self.beams).map(|k| -fov / 2.0 + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub arena: Rect,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    pub goal_radius: f64,
    pub robot_radius: f64,
    pub min_goal_distance: f64,
    #[serde(default)]
    pub lidar: LidarConfig,
}

const FOUR_OBSTACLES: &str = include_str!("../../worlds/four_obstacles.toml");
const OPEN: &str = include_str!("../../worlds/open.toml");

impl World {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let world: World = toml::from_str(text)?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Bundled default: square arena with four rectangular obstacles.
    pub fn four_obstacles() -> Self {
        Self::from_toml(FOUR_OBSTACLES).expect("bundled world is valid")
    }

    /// Bundled small obstacle-free arena.
    pub fn open() -> Self {
        Self::from_toml(OPEN).expect("bundled world is valid")
    }

    pub fn named(name: &str) -> Option<Self> {
        match name {
            "four_obstacles" => Some(Self::four_obstacles()),
            "open" => Some(Self::open()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidWorld(m));
        if !self.arena.is_proper() {
            return bad("arena must have positive extent".into());
        }
        if !self.arena.contains(0.0, 0.0) {
            return bad("origin must lie inside the arena".into());
        }
        for (k, ob) in self.obstacles.iter().enumerate() {
            if !ob.is_proper() {
                return bad(format!("obstacle {k} must have positive extent"));
            }
            if ob.min_x < self.arena.min_x
                || ob.min_y < self.arena.min_y
                || ob.max_x > self.arena.max_x
                || ob.max_y > self.arena.max_y
            {
                return bad(format!("obstacle {k} leaves the arena"));
            }
            if disk_hits_rect(0.0, 0.0, self.robot_radius, ob) {
                return bad(format!("obstacle {k} overlaps the spawn point"));
            }
        }
        if !(self.goal_radius > 0.0 && self.robot_radius > 0.0 && self.min_goal_distance >= 0.0) {
            return bad("radii must be positive".into());
        }
        if self.lidar.beams == 0 || self.lidar.history == 0 || !(self.lidar.max_range > 0.0) {
            return bad("lidar needs beams, history and a positive range".into());
        }
        Ok(())
    }

    /// Whether a disk of the robot's radius at `(x, y)` touches a wall or obstacle.
    pub fn collides(&self, x: f64, y: f64) -> bool {
        let r = self.robot_radius;
        x - r < self.arena.min_x
            || x + r > self.arena.max_x
            || y - r < self.arena.min_y
            || y + r > self.arena.max_y
            || self.obstacles.iter().any(|ob| disk_hits_rect(x, y, r, ob))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            omega_max: 1.0,
        }
    }
}

impl ActionBounds {
    pub fn is_valid(&self) -> bool {
        self.v_max > 0.0 && self.omega_max > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub v: f64,
    pub omega: f64,
}

impl RobotState {
    pub fn at_origin(heading: f64) -> Self {
        Self {
            pose: Pose {
                x: 0.0,
                y: 0.0,
                heading,
            },
            v: 0.0,
            omega: 0.0,
        }
    }

    /// Goal expressed in the robot frame.
    pub fn to_local(&self, goal: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (goal.0 - self.pose.x, goal.1 - self.pose.y);
        let (s, c) = self.pose.heading.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn distance_to(&self, goal: (f64, f64)) -> f64 {
        (goal.0 - self.pose.x).hypot(goal.1 - self.pose.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}
