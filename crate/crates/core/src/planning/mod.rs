//! Planner server and its plugins.

pub mod astar;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::RequestId;
use crate::costmap::CostSnapshot;
use crate::geometry::{CellIndex, Pose2D};
use crate::lifecycle::{LifecycleHooks, ManagedServer, Transition};

pub use astar::{astar_plan, AstarPlanner, ExactCost};

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub poses: Vec<Pose2D>,
    pub cost: f64,
    pub exact_cost: ExactCost,
    /// Stamp of the snapshot the path was planned on.
    pub stamp: f64,
}

impl Path {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Sum of straight-line segment lengths.
    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub start: Pose2D,
    pub goal: Pose2D,
    pub planner_id: String,
}

impl PlanRequest {
    pub fn new(start: Pose2D, goal: Pose2D) -> Self {
        Self { start, goal, planner_id: "astar".into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("planner server is not active")]
    ServerUnavailable,
    #[error("start or goal lies outside the map")]
    RejectedGoal,
    #[error("cell outside the costmap")]
    OutOfMap,
    #[error("goal cell is occupied")]
    GoalOccupied,
    #[error("start cell is occupied")]
    StartOccupied,
    #[error("no path found")]
    NoPathFound,
    #[error("unknown planner plugin {0:?}")]
    UnknownPlugin(String),
    #[error("request was cancelled")]
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub plugin: String,
    /// Multiplier on normalized cell cost in the traversal cost.
    pub cost_weight: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self { plugin: "astar".into(), cost_weight: 3.0 }
    }
}

pub trait PlannerPlugin {
    fn plan(
        &mut self,
        snapshot: &CostSnapshot,
        start: CellIndex,
        goal: CellIndex,
        params: &PlannerParams,
    ) -> Result<Path, PlanError>;
}

impl PlannerPlugin for AstarPlanner {
    fn plan(
        &mut self,
        snapshot: &CostSnapshot,
        start: CellIndex,
        goal: CellIndex,
        params: &PlannerParams,
    ) -> Result<Path, PlanError> {
        AstarPlanner::plan(self, snapshot, start, goal, params)
    }
}

pub type PlannerFactory = fn() -> Box<dyn PlannerPlugin>;

/// Planner plugins by id, instantiated when the server is configured.
#[derive(Clone)]
pub struct PlannerRegistry {
    factories: BTreeMap<String, PlannerFactory>,
}

impl Default for PlannerRegistry {
    fn default() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("astar", || Box::new(AstarPlanner::new()));
        r
    }
}

impl PlannerRegistry {
    pub fn register(&mut self, id: &str, factory: PlannerFactory) {
        self.factories.insert(id.to_string(), factory);
    }

    pub fn create(&self, id: &str) -> Option<Box<dyn PlannerPlugin>> {
        self.factories.get(id).map(|f| f())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RequestStatus {
    Pending,
    Succeeded(Path),
    Failed(PlanError),
    Cancelled,
}

pub struct PlannerServer {
    pub params: PlannerParams,
    registry: PlannerRegistry,
    plugins: HashMap<String, Box<dyn PlannerPlugin>>,
    pending: Option<(RequestId, PlanRequest)>,
    outcomes: HashMap<RequestId, RequestStatus>,
    next_id: RequestId,
    /// Total plans attempted and how many failed.
    pub plans: usize,
    pub failures: usize,
}

impl std::fmt::Debug for PlannerServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlannerServer")
            .field("params", &self.params)
            .field("plugins", &self.plugins.keys().collect::<Vec<_>>())
            .field("pending", &self.pending)
            .finish()
    }
}

impl LifecycleHooks for PlannerServer {
    fn on_transition(&mut self, t: Transition) -> Result<(), String> {
        match t {
            Transition::Configure => {
                let id = self.params.plugin.clone();
                let plugin = self.registry.create(&id).ok_or_else(|| PlanError::UnknownPlugin(id.clone()).to_string())?;
                self.plugins.insert(id, plugin);
            }
            Transition::Deactivate => self.cancel_pending(),
            Transition::Cleanup | Transition::Shutdown => {
                self.cancel_pending();
                self.plugins.clear();
            }
            Transition::Activate => {}
        }
        Ok(())
    }
}

impl PlannerServer {
    pub fn new(params: PlannerParams) -> Self {
        Self::with_registry(params, PlannerRegistry::default())
    }

    pub fn with_registry(params: PlannerParams, registry: PlannerRegistry) -> Self {
        Self {
            params,
            registry,
            plugins: HashMap::new(),
            pending: None,
            outcomes: HashMap::new(),
            next_id: 1,
            plans: 0,
            failures: 0,
        }
    }

    /// Plans immediately against `snapshot`. The path's final heading is the goal's.
    pub fn compute_path(&mut self, snapshot: &CostSnapshot, req: &PlanRequest) -> Result<Path, PlanError> {
        let meta = snapshot.meta();
        let start = meta.world_to_cell(req.start.x, req.start.y).map_err(|_| PlanError::RejectedGoal)?;
        let goal = meta.world_to_cell(req.goal.x, req.goal.y).map_err(|_| PlanError::RejectedGoal)?;
        let plugin = self
            .plugins
            .get_mut(&req.planner_id)
            .ok_or_else(|| PlanError::UnknownPlugin(req.planner_id.clone()))?;
        self.plans += 1;
        let result = plugin.plan(snapshot, start, goal, &self.params).map(|mut p| {
            if let Some(last) = p.poses.last_mut() {
                last.theta = req.goal.theta;
            }
            p
        });
        if result.is_err() {
            self.failures += 1;
        }
        result
    }

    /// Queues a request, preempting any request still pending.
    pub fn submit(&mut self, req: PlanRequest) -> RequestId {
        self.cancel_pending();
        let id = self.next_id;
        self.next_id += 1;
        self.outcomes.insert(id, RequestStatus::Pending);
        self.pending = Some((id, req));
        id
    }

    /// Runs the pending request, if any, against `snapshot`.
    pub fn process(&mut self, snapshot: &CostSnapshot) {
        if let Some((id, req)) = self.pending.take() {
            let status = match self.compute_path(snapshot, &req) {
                Ok(p) => RequestStatus::Succeeded(p),
                Err(e) => RequestStatus::Failed(e),
            };
            self.outcomes.insert(id, status);
        }
    }

    pub fn cancel(&mut self, id: RequestId) {
        if matches!(&self.pending, Some((p, _)) if *p == id) {
            self.cancel_pending();
        }
    }

    fn cancel_pending(&mut self) {
        if let Some((id, _)) = self.pending.take() {
            self.outcomes.insert(id, RequestStatus::Cancelled);
        }
    }

    pub fn status(&self, id: RequestId) -> Option<&RequestStatus> {
        self.outcomes.get(&id)
    }

    /// Removes and returns a terminal outcome.
    pub fn take_outcome(&mut self, id: RequestId) -> Option<RequestStatus> {
        match self.outcomes.get(&id) {
            Some(RequestStatus::Pending) | None => None,
            Some(_) => self.outcomes.remove(&id),
        }
    }
}

/// Lifecycle-checked entry point: refuses requests unless the server is Active.
pub fn compute_path(
    server: &mut ManagedServer<PlannerServer>,
    snapshot: &CostSnapshot,
    req: &PlanRequest,
) -> Result<Path, PlanError> {
    server.active().map_err(|_| PlanError::ServerUnavailable)?.compute_path(snapshot, req)
}
