//! Controller server: dynamic-window sampling, trajectory scoring, goal and
//! progress checking.

pub mod dwb;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::RequestId;
use crate::costmap::{cost, CostSnapshot};
use crate::geometry::{integrate_twist, wrap_angle, Pose2D, Twist};
use crate::lifecycle::{LifecycleHooks, ManagedServer, Transition};
use crate::planning::Path;

pub use dwb::DwbController;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("controller server is not active")]
    ServerUnavailable,
    #[error("no path to follow")]
    NoPath,
    #[error("every sampled trajectory is in collision")]
    NoValidControl,
    #[error("robot made no progress")]
    NoProgress,
    #[error("invalid controller parameters: {0}")]
    InvalidParams(String),
    #[error("unknown controller plugin {0:?}")]
    UnknownPlugin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocityLimits {
    pub vx_max: f64,
    pub wz_max: f64,
    /// m/s²
    pub ax: f64,
    /// rad/s²
    pub aw: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self { vx_max: 0.45, wz_max: 1.0, ax: 0.5, aw: 1.6 }
    }
}

impl VelocityLimits {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.vx_max > 0.0 && self.wz_max > 0.0 && self.ax > 0.0 && self.aw > 0.0 {
            Ok(())
        } else {
            Err(ControlError::InvalidParams(format!("velocity and acceleration limits must be > 0: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticWeights {
    pub obstacle: f64,
    pub path: f64,
    pub goal: f64,
    pub speed: f64,
    /// Penalizes the final heading pointing away from the target point.
    pub heading: f64,
}

impl Default for CriticWeights {
    fn default() -> Self {
        Self { obstacle: 1.0, path: 2.0, goal: 2.0, speed: 0.5, heading: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalTolerances {
    pub xy_tol: f64,
    pub yaw_tol: f64,
}

impl Default for GoalTolerances {
    fn default() -> Self {
        Self { xy_tol: 0.25, yaw_tol: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerParams {
    pub plugin: String,
    pub limits: VelocityLimits,
    pub weights: CriticWeights,
    pub tolerances: GoalTolerances,
    pub sim_time: f64,
    pub sim_dt: f64,
    pub vx_samples: usize,
    pub wz_samples: usize,
    /// Control period used for the dynamic window, seconds.
    pub control_period: f64,
    /// Arc length from the nearest path pose to the scored target point.
    pub lookahead: f64,
    /// Arc length of path kept ahead of the robot for the path critic.
    pub prune_distance: f64,
    /// Proportional gain on heading error in rotate-to-heading mode.
    pub rotate_gain: f64,
    /// The robot must move this far ...
    pub progress_radius: f64,
    /// ... within this many seconds, or FollowPath fails.
    pub progress_timeout: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            plugin: "dwb".into(),
            limits: VelocityLimits::default(),
            weights: CriticWeights::default(),
            tolerances: GoalTolerances::default(),
            sim_time: 1.5,
            sim_dt: 0.1,
            vx_samples: 10,
            wz_samples: 20,
            control_period: 0.1,
            lookahead: 0.6,
            prune_distance: 2.0,
            rotate_gain: 2.0,
            progress_radius: 0.25,
            progress_timeout: 10.0,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.limits.validate()?;
        let w = &self.weights;
        let ws = [w.obstacle, w.path, w.goal, w.speed];
        if ws.iter().any(|v| !(*v >= 0.0)) || ws.iter().all(|v| *v == 0.0) {
            return Err(ControlError::InvalidParams("critic weights must be >= 0 with at least one > 0".into()));
        }
        if !(self.tolerances.xy_tol > 0.0 && self.tolerances.yaw_tol > 0.0) {
            return Err(ControlError::InvalidParams("goal tolerances must be > 0".into()));
        }
        if self.vx_samples == 0 || self.wz_samples == 0 {
            return Err(ControlError::InvalidParams("sample counts must be >= 1".into()));
        }
        if !(self.sim_dt > 0.0 && self.sim_time >= self.sim_dt && self.control_period > 0.0) {
            return Err(ControlError::InvalidParams("need 0 < sim_dt <= sim_time and control_period > 0".into()));
        }
        if !(self.progress_timeout > 0.0 && self.progress_radius >= 0.0) {
            return Err(ControlError::InvalidParams("progress checker parameters out of range".into()));
        }
        Ok(())
    }
}

/// Velocities reachable within one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityWindow {
    pub vx: (f64, f64),
    pub wz: (f64, f64),
}

impl VelocityWindow {
    pub fn contains(&self, t: &Twist, eps: f64) -> bool {
        t.vx >= self.vx.0 - eps && t.vx <= self.vx.1 + eps && t.wz >= self.wz.0 - eps && t.wz <= self.wz.1 + eps
    }
}

pub fn dynamic_window(current: &Twist, limits: &VelocityLimits, dt: f64) -> Result<VelocityWindow, ControlError> {
    if !(dt > 0.0) {
        return Err(ControlError::InvalidParams(format!("window dt must be > 0, got {dt}")));
    }
    let vx = (
        (current.vx - limits.ax * dt).clamp(0.0, limits.vx_max),
        (current.vx + limits.ax * dt).clamp(0.0, limits.vx_max),
    );
    let wz = (
        (current.wz - limits.aw * dt).clamp(-limits.wz_max, limits.wz_max),
        (current.wz + limits.aw * dt).clamp(-limits.wz_max, limits.wz_max),
    );
    Ok(VelocityWindow { vx, wz })
}

/// A constant-twist rollout. `poses` excludes the start pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub twist: Twist,
    pub poses: Vec<Pose2D>,
}

impl Trajectory {
    pub fn rollout(start: Pose2D, twist: Twist, sim_time: f64, sim_dt: f64) -> Self {
        let steps = (sim_time / sim_dt + 1e-9).floor() as usize;
        let poses = (1..=steps).map(|k| integrate_twist(&start, &twist, sim_dt * k as f64)).collect();
        Self { twist, poses }
    }
}

fn spread(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    if n == 1 {
        0.5 * (lo + hi)
    } else if i == n - 1 {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

/// Evenly spaced samples over the window, vx-major.
pub fn sample_trajectories(
    start: &Pose2D,
    window: &VelocityWindow,
    n_vx: usize,
    n_wz: usize,
    sim_time: f64,
    sim_dt: f64,
) -> Result<Vec<Trajectory>, ControlError> {
    if n_vx == 0 || n_wz == 0 || !(sim_dt > 0.0) || sim_time < sim_dt {
        return Err(ControlError::InvalidParams("need n_vx, n_wz >= 1 and 0 < sim_dt <= sim_time".into()));
    }
    let mut out = Vec::with_capacity(n_vx * n_wz);
    for i in 0..n_vx {
        let vx = spread(window.vx.0, window.vx.1, n_vx, i);
        for j in 0..n_wz {
            let wz = spread(window.wz.0, window.wz.1, n_wz, j);
            out.push(Trajectory::rollout(*start, Twist::new(vx, wz), sim_time, sim_dt));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Feasible(f64),
    Infeasible,
}

impl Score {
    pub fn value(self) -> Option<f64> {
        match self {
            Score::Feasible(v) => Some(v),
            Score::Infeasible => None,
        }
    }
}

/// Cost of the cell under a pose for control purposes: unknown counts as free
/// and anything outside the local window as lethal.
#[inline]
pub fn control_cost(snapshot: &CostSnapshot, p: &Pose2D) -> u8 {
    match snapshot.grid.at_world(p.x, p.y) {
        Some(cost::UNKNOWN) => cost::FREE,
        Some(c) => c,
        None => cost::LETHAL,
    }
}

/// Weighted critic sum, lower is better. `path` is the path segment the path
/// critic measures against and `target` the point the goal critic pulls toward.
pub fn score_trajectory(
    traj: &Trajectory,
    snapshot: &CostSnapshot,
    path: &[Pose2D],
    target: &Pose2D,
    weights: &CriticWeights,
    vx_max: f64,
) -> Result<Score, ControlError> {
    if path.is_empty() {
        return Err(ControlError::NoPath);
    }
    let mut max_cost = 0u8;
    let mut path_dist = 0.0;
    for p in &traj.poses {
        let c = control_cost(snapshot, p);
        if c >= cost::INSCRIBED {
            return Ok(Score::Infeasible);
        }
        max_cost = max_cost.max(c);
        let mut best = f64::INFINITY;
        for q in path {
            let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
            if d2 < best {
                best = d2;
            }
        }
        path_dist += best.sqrt();
    }
    let n = traj.poses.len().max(1) as f64;
    let end = traj.poses.last().copied().unwrap_or_default();
    let goal_dist = end.distance(target);
    let heading_err = if goal_dist > 1e-9 {
        wrap_angle((target.y - end.y).atan2(target.x - end.x) - end.theta).abs() / std::f64::consts::PI
    } else {
        0.0
    };
    let score = weights.obstacle * (max_cost as f64 / cost::MAX_SCALED as f64)
        + weights.path * (path_dist / n)
        + weights.goal * goal_dist
        + weights.speed * (1.0 - traj.twist.vx / vx_max)
        + weights.heading * heading_err;
    Ok(Score::Feasible(score))
}

/// Inclusive xy and yaw check.
pub fn is_goal_reached(pose: &Pose2D, goal: &Pose2D, tol: &GoalTolerances) -> bool {
    pose.distance(goal) <= tol.xy_tol && wrap_angle(goal.theta - pose.theta).abs() <= tol.yaw_tol
}

/// A detected obstacle. Reserved for plugins that track dynamic obstacles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

pub struct ControlInput<'a> {
    pub pose: Pose2D,
    pub velocity: Twist,
    pub snapshot: &'a CostSnapshot,
    pub path: &'a Path,
    pub goal: Pose2D,
    pub detections: &'a [Detection],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub twist: Twist,
    /// The rollout of `twist` that was scored.
    pub trajectory: Trajectory,
}

pub trait ControllerPlugin {
    /// Drops per-goal state.
    fn reset(&mut self);
    fn compute_velocity(&mut self, input: &ControlInput<'_>, params: &ControllerParams) -> Result<ControlOutput, ControlError>;
    fn goal_reached(&self, pose: &Pose2D, goal: &Pose2D, params: &ControllerParams) -> bool;
}

pub type ControllerFactory = fn() -> Box<dyn ControllerPlugin>;

#[derive(Clone)]
pub struct ControllerRegistry {
    factories: BTreeMap<String, ControllerFactory>,
}

impl Default for ControllerRegistry {
    fn default() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("dwb", || Box::new(DwbController::new()));
        r
    }
}

impl ControllerRegistry {
    pub fn register(&mut self, id: &str, factory: ControllerFactory) {
        self.factories.insert(id.to_string(), factory);
    }

    pub fn create(&self, id: &str) -> Option<Box<dyn ControllerPlugin>> {
        self.factories.get(id).map(|f| f())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FollowStatus {
    Running(ControlOutput),
    Succeeded,
    Failed(ControlError),
    Cancelled,
}

#[derive(Debug, Clone, Copy)]
struct FollowState {
    id: RequestId,
    goal: Pose2D,
    anchor: Pose2D,
    anchor_time: f64,
}

pub struct ControllerServer {
    pub params: ControllerParams,
    registry: ControllerRegistry,
    plugin: Option<Box<dyn ControllerPlugin>>,
    follow: Option<FollowState>,
    last_goal: Option<Pose2D>,
    next_id: RequestId,
    /// Twist most recently commanded; zero whenever no request is running.
    pub cmd: Twist,
    pub cycles: u64,
}

impl std::fmt::Debug for ControllerServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControllerServer")
            .field("params", &self.params)
            .field("configured", &self.plugin.is_some())
            .field("cmd", &self.cmd)
            .finish()
    }
}

impl LifecycleHooks for ControllerServer {
    fn on_transition(&mut self, t: Transition) -> Result<(), String> {
        match t {
            Transition::Configure => {
                self.params.validate().map_err(|e| e.to_string())?;
                let id = &self.params.plugin;
                self.plugin =
                    Some(self.registry.create(id).ok_or_else(|| ControlError::UnknownPlugin(id.clone()).to_string())?);
            }
            Transition::Deactivate => self.stop(),
            Transition::Cleanup | Transition::Shutdown => {
                self.stop();
                self.plugin = None;
            }
            Transition::Activate => {}
        }
        Ok(())
    }
}

impl ControllerServer {
    pub fn new(params: ControllerParams) -> Self {
        Self::with_registry(params, ControllerRegistry::default())
    }

    pub fn with_registry(params: ControllerParams, registry: ControllerRegistry) -> Self {
        Self { params, registry, plugin: None, follow: None, last_goal: None, next_id: 1, cmd: Twist::ZERO, cycles: 0 }
    }

    fn stop(&mut self) {
        self.follow = None;
        self.cmd = Twist::ZERO;
    }

    fn plugin(&mut self) -> Result<&mut Box<dyn ControllerPlugin>, ControlError> {
        self.plugin.as_mut().ok_or(ControlError::ServerUnavailable)
    }

    /// Accepts a FollowPath request toward `goal`, replacing any running one.
    pub fn start_follow(&mut self, goal: Pose2D, pose: Pose2D, now: f64) -> Result<RequestId, ControlError> {
        if self.last_goal != Some(goal) {
            self.plugin()?.reset();
            self.last_goal = Some(goal);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.follow = Some(FollowState { id, goal, anchor: pose, anchor_time: now });
        Ok(id)
    }

    pub fn active_request(&self) -> Option<RequestId> {
        self.follow.map(|f| f.id)
    }

    pub fn cancel(&mut self, id: RequestId) {
        if self.active_request() == Some(id) {
            self.stop();
        }
    }

    /// Single control cycle for a running request.
    pub fn step(
        &mut self,
        id: RequestId,
        pose: Pose2D,
        velocity: Twist,
        snapshot: &CostSnapshot,
        path: Option<&Path>,
        now: f64,
    ) -> FollowStatus {
        let Some(mut st) = self.follow.filter(|f| f.id == id) else {
            return FollowStatus::Cancelled;
        };
        let params = self.params.clone();
        let Some(plugin) = self.plugin.as_mut() else {
            self.stop();
            return FollowStatus::Failed(ControlError::ServerUnavailable);
        };
        if plugin.goal_reached(&pose, &st.goal, &params) {
            self.stop();
            return FollowStatus::Succeeded;
        }
        if pose.distance(&st.anchor) >= params.progress_radius || pose.distance(&st.goal) <= params.tolerances.xy_tol {
            st.anchor = pose;
            st.anchor_time = now;
        } else if now - st.anchor_time > params.progress_timeout {
            self.stop();
            return FollowStatus::Failed(ControlError::NoProgress);
        }
        let Some(path) = path else {
            self.stop();
            return FollowStatus::Failed(ControlError::NoPath);
        };
        let input = ControlInput { pose, velocity, snapshot, path, goal: st.goal, detections: &[] };
        self.cycles += 1;
        match plugin.compute_velocity(&input, &params) {
            Ok(out) => {
                self.follow = Some(st);
                self.cmd = out.twist;
                FollowStatus::Running(out)
            }
            Err(e) => {
                self.stop();
                FollowStatus::Failed(e)
            }
        }
    }
}

/// Lifecycle-checked single velocity computation outside a FollowPath request.
pub fn compute_velocity(
    server: &mut ManagedServer<ControllerServer>,
    pose: Pose2D,
    current: Twist,
    snapshot: &CostSnapshot,
    path: &Path,
    goal: Pose2D,
) -> Result<Twist, ControlError> {
    let srv = server.active().map_err(|_| ControlError::ServerUnavailable)?;
    let params = srv.params.clone();
    let input = ControlInput { pose, velocity: current, snapshot, path, goal, detections: &[] };
    srv.plugin()?.compute_velocity(&input, &params).map(|o| o.twist)
}
