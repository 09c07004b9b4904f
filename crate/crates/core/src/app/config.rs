//! Scenario files: TOML describing the map, robot, servers, agents and route.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::AppError;
use crate::control::{ControllerParams, VelocityLimits};
use crate::costmap::CostmapParams;
use crate::geometry::Pose2D;
use crate::localization::{AmclParams, NoiseParams};
use crate::planning::PlannerParams;
use crate::recovery::RecoveryParams;
use crate::sim::{AgentState, AgentWaypoint, LidarSpec};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFiles {
    pub pgm: PathBuf,
    pub yaml: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// `[x, y, theta]`
    pub start: [f64; 3],
    pub radius: f64,
    pub odom_noise: NoiseParams,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self { start: [0.0; 3], radius: 0.22, odom_noise: NoiseParams::default() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub start: [f64; 2],
    pub speed: f64,
    #[serde(default = "default_agent_radius")]
    pub radius: f64,
    #[serde(default)]
    pub dwell: f64,
    /// Each entry is `[x, y]` or `[x, y, dwell]`.
    pub waypoints: Vec<Vec<f64>>,
}

fn default_agent_radius() -> f64 {
    0.25
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Use the true pose instead of the particle filter estimate.
    pub ground_truth_localization: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: crate::sim::DEFAULT_DT, ground_truth_localization: false }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map: MapFiles,
    #[serde(default)]
    pub bt: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub laps: usize,
    /// Simulated seconds after which the run stops.
    #[serde(default = "default_max_duration")]
    pub max_duration: f64,
    /// A waypoint whose distance has not improved for this long is skipped.
    #[serde(default = "default_waypoint_timeout")]
    pub waypoint_timeout: f64,
    /// Minimum improvement that counts as progress toward a waypoint.
    #[serde(default = "default_waypoint_progress")]
    pub waypoint_progress: f64,
    /// Route entries are `[x, y]` or `[x, y, theta]`. Without a heading the
    /// goal faces the next waypoint.
    pub route: Vec<Vec<f64>>,
    #[serde(default)]
    pub robot: RobotConfig,
    #[serde(default)]
    pub limits: VelocityLimits,
    #[serde(default)]
    pub lidar: LidarSpec,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub planner_server: PlannerParams,
    #[serde(default)]
    pub controller_server: ControllerParams,
    #[serde(default)]
    pub recovery_server: RecoveryParams,
    #[serde(default)]
    pub amcl: AmclParams,
    #[serde(default)]
    pub costmap: CostmapParams,
    #[serde(default)]
    pub agents: Vec<AgentConfig>,
}

fn one() -> usize {
    1
}
fn default_max_duration() -> f64 {
    3600.0
}
fn default_waypoint_timeout() -> f64 {
    30.0
}
fn default_waypoint_progress() -> f64 {
    0.25
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, AppError> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        cfg.controller_server.limits = cfg.limits;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a scenario and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.map.pgm = base.join(&cfg.map.pgm);
        cfg.map.yaml = base.join(&cfg.map.yaml);
        if let Some(bt) = cfg.bt.take() {
            cfg.bt = Some(base.join(bt));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |m: String| Err(AppError::Config(m));
        if self.route.is_empty() {
            return bad("route must contain at least one waypoint".into());
        }
        if self.laps == 0 {
            return bad("laps must be >= 1".into());
        }
        for (i, w) in self.route.iter().enumerate() {
            if !(w.len() == 2 || w.len() == 3) || w.iter().any(|v| !v.is_finite()) {
                return bad(format!("route entry {i} must be [x, y] or [x, y, theta]"));
            }
        }
        if !(self.max_duration > 0.0 && self.waypoint_timeout > 0.0 && self.waypoint_progress > 0.0) {
            return bad("max_duration, waypoint_timeout and waypoint_progress must be > 0".into());
        }
        if !(self.sim.dt > 0.0) {
            return bad("sim.dt must be > 0".into());
        }
        if !(self.robot.radius > 0.0) {
            return bad("robot.radius must be > 0".into());
        }
        self.limits.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.controller_server.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.amcl.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.costmap.validate().map_err(|e| AppError::Config(e.to_string()))?;
        self.lidar.validate().map_err(AppError::Config)?;
        self.robot.odom_noise.validate().map_err(AppError::Config)?;
        if !(self.planner_server.cost_weight >= 0.0) {
            return bad("planner_server.cost_weight must be >= 0".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.speed >= 0.0 && a.radius > 0.0 && a.dwell >= 0.0) {
                return bad(format!("agent {i}: need speed >= 0, radius > 0, dwell >= 0"));
            }
            for w in &a.waypoints {
                if !(w.len() == 2 || (w.len() == 3 && w[2] >= 0.0)) {
                    return bad(format!("agent {i}: waypoints must be [x, y] or [x, y, dwell >= 0]"));
                }
            }
        }
        Ok(())
    }

    pub fn start_pose(&self) -> Pose2D {
        let [x, y, th] = self.robot.start;
        Pose2D::new(x, y, th)
    }

    /// Route goals with headings filled in.
    pub fn route_poses(&self) -> Vec<Pose2D> {
        let n = self.route.len();
        (0..n)
            .map(|i| {
                let w = &self.route[i];
                let theta = match w.get(2) {
                    Some(t) => *t,
                    None => {
                        let next = &self.route[(i + 1) % n];
                        if n == 1 || (next[0] == w[0] && next[1] == w[1]) {
                            0.0
                        } else {
                            (next[1] - w[1]).atan2(next[0] - w[0])
                        }
                    }
                };
                Pose2D::new(w[0], w[1], theta)
            })
            .collect()
    }

    pub fn agent_states(&self) -> Vec<AgentState> {
        self.agents
            .iter()
            .enumerate()
            .map(|(id, a)| {
                let wps = a
                    .waypoints
                    .iter()
                    .map(|w| AgentWaypoint { x: w[0], y: w[1], dwell: w.get(2).copied() })
                    .collect();
                AgentState::new(id, a.start[0], a.start[1], a.speed, a.radius, a.dwell, wps)
            })
            .collect()
    }
}
