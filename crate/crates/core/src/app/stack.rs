//! The managed servers behind the tree's action leaves.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::bt::{blackboard, ActionBackend, ActionSpec, ActionState, Blackboard, NavBackend, Navigator, RequestId};
use crate::bt::{parse_tree, ActionRegistry};
use crate::control::{ControlOutput, ControllerServer, FollowStatus, Trajectory};
use crate::costmap::{cost, ClearScope, CostSnapshot, LayeredCostmap};
use crate::geometry::{Pose2D, Twist};
use crate::grid::OccupancyGrid;
use crate::lifecycle::{LifecycleHooks, Managed, ManagedServer, NodeState, Transition};
use crate::localization::{Amcl, AmclParams};
use crate::planning::{Path, PlanRequest, PlannerServer, RequestStatus};
use crate::recovery::{RecoveryRecord, RecoveryServer, RecoveryStatus};

/// Bringup order; shutdown runs in reverse.
pub const SERVER_ORDER: [&str; 5] = ["amcl", "planner_server", "controller_server", "recovery_server", "bt_navigator"];

/// Particle filter wrapped as a managed server.
#[derive(Debug)]
pub struct LocalizationNode {
    map: Arc<OccupancyGrid>,
    params: AmclParams,
    seed: u64,
    initial: Pose2D,
    pub amcl: Option<Amcl>,
}

impl LocalizationNode {
    pub fn new(map: Arc<OccupancyGrid>, params: AmclParams, seed: u64, initial: Pose2D) -> Self {
        Self { map, params, seed, initial, amcl: None }
    }
}

impl LifecycleHooks for LocalizationNode {
    fn on_transition(&mut self, t: Transition) -> Result<(), String> {
        match t {
            Transition::Configure => {
                let mut a = Amcl::new(&self.map, self.params, self.seed).map_err(|e| e.to_string())?;
                a.init_at(self.initial);
                self.amcl = Some(a);
            }
            Transition::Cleanup | Transition::Shutdown => self.amcl = None,
            Transition::Activate | Transition::Deactivate => {}
        }
        Ok(())
    }
}

/// Holds the tree source and builds the navigator on configure.
pub struct NavigatorNode {
    xml: String,
    pub navigator: Option<Navigator>,
}

impl std::fmt::Debug for NavigatorNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NavigatorNode").field("configured", &self.navigator.is_some()).finish()
    }
}

impl NavigatorNode {
    pub fn new(xml: String) -> Self {
        Self { xml, navigator: None }
    }
}

impl LifecycleHooks for NavigatorNode {
    fn on_transition(&mut self, t: Transition) -> Result<(), String> {
        match t {
            Transition::Configure => {
                let tree = parse_tree(&self.xml, &ActionRegistry::navigation()).map_err(|e| e.to_string())?;
                self.navigator = Some(Navigator::new(tree));
            }
            Transition::Cleanup | Transition::Shutdown => self.navigator = None,
            Transition::Activate | Transition::Deactivate => {}
        }
        Ok(())
    }
}

/// Counters from re-simulating every chosen trajectory against the costmap
/// the controller saw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ControlAudit {
    pub cycles: u64,
    pub unsafe_cycles: u64,
}

/// True when any pose of the re-simulated trajectory sits on a cell with
/// cost >= inscribed or outside the window.
pub fn trajectory_touches_lethal(snapshot: &CostSnapshot, traj: &Trajectory) -> bool {
    traj.poses.iter().any(|p| match snapshot.grid.at_world(p.x, p.y) {
        Some(c) => c >= cost::INSCRIBED,
        None => true,
    })
}

#[derive(Debug, Clone)]
enum Pending {
    Plan(RequestId),
    Follow(RequestId),
    Done(ActionState),
    Recovery(RequestId),
}

/// Everything the action leaves talk to, plus the robot state they need.
pub struct NavStack {
    pub amcl: ManagedServer<LocalizationNode>,
    pub planner: ManagedServer<PlannerServer>,
    pub controller: ManagedServer<ControllerServer>,
    pub recovery: ManagedServer<RecoveryServer>,
    pub global: LayeredCostmap,
    pub local: LayeredCostmap,
    /// Map-frame pose estimate.
    pub pose: Pose2D,
    /// Odometry pose and measured velocity.
    pub odom: Pose2D,
    pub velocity: Twist,
    pub odom_distance: f64,
    /// Velocity command for the next simulation steps.
    pub cmd: Twist,
    pub audit: ControlAudit,
    /// Extra per-cycle hook fed with the snapshot and output of every control cycle.
    pub control_hook: Option<Box<dyn FnMut(&CostSnapshot, &Pose2D, &ControlOutput)>>,
    pub path: Option<Path>,
    goal: Option<Pose2D>,
    reached: bool,
    requests: HashMap<RequestId, Pending>,
    next_id: RequestId,
}

impl NavStack {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        amcl: LocalizationNode,
        planner: PlannerServer,
        controller: ControllerServer,
        recovery: RecoveryServer,
        global: LayeredCostmap,
        local: LayeredCostmap,
        start: Pose2D,
    ) -> Self {
        Self {
            amcl: ManagedServer::new(SERVER_ORDER[0], amcl),
            planner: ManagedServer::new(SERVER_ORDER[1], planner),
            controller: ManagedServer::new(SERVER_ORDER[2], controller),
            recovery: ManagedServer::new(SERVER_ORDER[3], recovery),
            global,
            local,
            pose: start,
            odom: start,
            velocity: Twist::ZERO,
            odom_distance: 0.0,
            cmd: Twist::ZERO,
            audit: ControlAudit::default(),
            control_hook: None,
            path: None,
            goal: None,
            reached: false,
            requests: HashMap::new(),
            next_id: 1,
        }
    }

    pub fn server_states(&self) -> BTreeMap<String, NodeState> {
        let mut m = BTreeMap::new();
        m.insert(self.amcl.name().to_string(), self.amcl.state());
        m.insert(self.planner.name().to_string(), self.planner.state());
        m.insert(self.controller.name().to_string(), self.controller.state());
        m.insert(self.recovery.name().to_string(), self.recovery.state());
        m
    }

    pub fn goal(&self) -> Option<Pose2D> {
        self.goal
    }

    /// Recoveries that finished since the last call.
    pub fn take_finished_recoveries(&mut self) -> Vec<RecoveryRecord> {
        self.recovery.hooks_mut().drain_unreported()
    }

    fn register(&mut self, p: Pending) -> RequestId {
        let id = self.next_id;
        self.next_id += 1;
        self.requests.insert(id, p);
        id
    }

    fn send_plan(&mut self, bb: &Blackboard) -> Result<Pending, String> {
        let goal = *bb.get::<Pose2D>(blackboard::GOAL).ok_or("no goal on the blackboard")?;
        let snapshot = self.global.snapshot();
        let srv = self.planner.active().map_err(|e| e.to_string())?;
        let id = srv.submit(PlanRequest::new(self.pose, goal));
        srv.process(&snapshot);
        Ok(Pending::Plan(id))
    }

    fn send_follow(&mut self, bb: &Blackboard, now: f64) -> Result<Pending, String> {
        let goal = *bb.get::<Pose2D>(blackboard::GOAL).ok_or("no goal on the blackboard")?;
        if !bb.contains(blackboard::PATH) {
            return Err("no path to follow".into());
        }
        let srv = self.controller.active().map_err(|e| e.to_string())?;
        let id = srv.start_follow(goal, self.pose, now).map_err(|e| e.to_string())?;
        Ok(Pending::Follow(id))
    }

    fn send_recovery(&mut self, action: &ActionSpec, now: f64) -> Result<Pending, String> {
        let pose = self.pose;
        let odom_yaw = self.odom.theta;
        let srv = self.recovery.active().map_err(|e| e.to_string())?;
        let params = srv.params;
        match action.name.as_str() {
            "ClearCostmap" => {
                let scope = action.params.get("scope").and_then(|s| ClearScope::parse(s)).unwrap_or(ClearScope::Both);
                let state = match srv.execute_clear(scope, &mut self.global, &mut self.local, &pose, now) {
                    Ok(_) => ActionState::Succeeded,
                    Err(e) => ActionState::Failed(e.to_string()),
                };
                Ok(Pending::Done(state))
            }
            "Spin" => {
                let target = action.param_f64("target_yaw").unwrap_or(params.spin_target);
                srv.start_spin(target, odom_yaw, &pose, now).map(Pending::Recovery).map_err(|e| e.to_string())
            }
            "Wait" => {
                let d = action.param_f64("duration").unwrap_or(params.wait_duration);
                srv.start_wait(d, &pose, now).map(Pending::Recovery).map_err(|e| e.to_string())
            }
            other => Err(format!("no server handles action {other}")),
        }
    }

    fn poll_follow(&mut self, rid: RequestId, bb: &mut Blackboard, now: f64) -> ActionState {
        let snapshot = self.local.snapshot();
        let (pose, vel) = (self.pose, self.velocity);
        let path = bb.get::<Path>(blackboard::PATH).cloned();
        let Ok(srv) = self.controller.active() else {
            return ActionState::Failed("controller_server is not active".into());
        };
        match srv.step(rid, pose, vel, &snapshot, path.as_ref(), now) {
            FollowStatus::Running(out) => {
                self.cmd = out.twist;
                let params = &srv.params;
                let resim = Trajectory::rollout(pose, out.twist, params.sim_time, params.sim_dt);
                self.audit.cycles += 1;
                if trajectory_touches_lethal(&snapshot, &resim) {
                    self.audit.unsafe_cycles += 1;
                }
                if let Some(h) = self.control_hook.as_mut() {
                    h(&snapshot, &pose, &out);
                }
                ActionState::Running
            }
            FollowStatus::Succeeded => {
                self.cmd = Twist::ZERO;
                self.reached = true;
                ActionState::Succeeded
            }
            FollowStatus::Failed(e) => {
                self.cmd = Twist::ZERO;
                ActionState::Failed(e.to_string())
            }
            FollowStatus::Cancelled => ActionState::Cancelled,
        }
    }

    fn poll_recovery(&mut self, rid: RequestId, now: f64) -> ActionState {
        let yaw = self.odom.theta;
        let Ok(srv) = self.recovery.active() else {
            return ActionState::Failed("recovery_server is not active".into());
        };
        match srv.step(rid, yaw, now) {
            Some(RecoveryStatus::Running(tw)) => {
                self.cmd = tw;
                ActionState::Running
            }
            Some(RecoveryStatus::Done(rec)) => {
                self.cmd = Twist::ZERO;
                match rec.outcome {
                    crate::recovery::RecoveryOutcome::Success => ActionState::Succeeded,
                    crate::recovery::RecoveryOutcome::Failure => ActionState::Failed(format!("{} failed", rec.kind.name())),
                    crate::recovery::RecoveryOutcome::Cancelled => ActionState::Cancelled,
                }
            }
            None => ActionState::Cancelled,
        }
    }
}

impl ActionBackend for NavStack {
    fn send(&mut self, action: &ActionSpec, bb: &mut Blackboard, now: f64) -> Result<RequestId, String> {
        let pending = match action.name.as_str() {
            "ComputePathToPose" => self.send_plan(bb)?,
            "FollowPath" => self.send_follow(bb, now)?,
            _ => self.send_recovery(action, now)?,
        };
        Ok(self.register(pending))
    }

    fn poll(&mut self, id: RequestId, bb: &mut Blackboard, now: f64) -> ActionState {
        let Some(p) = self.requests.get(&id).cloned() else {
            return ActionState::Failed(format!("unknown request {id}"));
        };
        let state = match p {
            Pending::Plan(pid) => {
                let Ok(srv) = self.planner.active() else {
                    return ActionState::Failed("planner_server is not active".into());
                };
                match srv.take_outcome(pid) {
                    None => ActionState::Running,
                    Some(RequestStatus::Succeeded(path)) => {
                        self.path = Some(path.clone());
                        bb.set(blackboard::PATH, path);
                        ActionState::Succeeded
                    }
                    Some(RequestStatus::Failed(e)) => ActionState::Failed(e.to_string()),
                    Some(RequestStatus::Cancelled) | Some(RequestStatus::Pending) => ActionState::Cancelled,
                }
            }
            Pending::Follow(fid) => self.poll_follow(fid, bb, now),
            Pending::Recovery(rid) => self.poll_recovery(rid, now),
            Pending::Done(s) => s,
        };
        if state != ActionState::Running {
            self.requests.remove(&id);
        }
        state
    }

    fn cancel(&mut self, id: RequestId, now: f64) {
        let Some(p) = self.requests.remove(&id) else {
            return;
        };
        match p {
            Pending::Plan(pid) => {
                if let Ok(s) = self.planner.active() {
                    s.cancel(pid);
                }
            }
            Pending::Follow(fid) => {
                if let Ok(s) = self.controller.active() {
                    s.cancel(fid);
                }
                self.cmd = Twist::ZERO;
            }
            Pending::Recovery(rid) => {
                if let Ok(s) = self.recovery.active() {
                    s.cancel(rid, now);
                }
                self.cmd = Twist::ZERO;
            }
            Pending::Done(_) => {}
        }
    }
}

impl NavBackend for NavStack {
    fn current_pose(&self) -> Pose2D {
        self.pose
    }

    fn goal_in_map(&self, goal: &Pose2D) -> bool {
        self.global.meta().contains_point(goal.x, goal.y)
    }

    fn begin_navigation(&mut self, goal: &Pose2D, _now: f64) {
        self.goal = Some(*goal);
        self.reached = false;
        self.path = None;
        self.cmd = Twist::ZERO;
        self.recovery.hooks_mut().reset_budget();
    }

    fn goal_reached(&self) -> bool {
        self.reached
    }

    fn recovery_counts(&self) -> BTreeMap<String, usize> {
        self.recovery.hooks().counts()
    }

    fn odometric_distance(&self) -> f64 {
        self.odom_distance
    }
}
