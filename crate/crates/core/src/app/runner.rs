//! The scenario event loop: simulation, sensing, localization, costmaps, the
//! tree and logging, all on one simulated clock.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use super::config::ScenarioConfig;
use super::map_io::{load_map, save_costmap_pgm};
use super::metrics::{emit_report, MetricsLogger, MetricsRow, RunReport, WaypointOutcome, WaypointStatus};
use super::stack::{ControlAudit, LocalizationNode, NavStack, NavigatorNode, SERVER_ORDER};
use super::AppError;
use crate::bt::{NavStatus, DEFAULT_TREE_XML};
use crate::control::{ControlOutput, ControllerServer};
use crate::costmap::{CostSnapshot, LayeredCostmap};
use crate::geometry::{Pose2D, Twist};
use crate::grid::OccupancyGrid;
use crate::lifecycle::{LifecycleManager, Managed, ManagedServer, NodeState, TransitionLogEntry};
use crate::planning::PlannerServer;
use crate::recovery::{RecoveryOutcome, RecoveryRecord, RecoveryServer};
use crate::sim::{CollisionReport, World, WorldConfig};

/// Rate of tree ticks, control cycles and scans.
pub const CONTROL_HZ: f64 = 10.0;

#[derive(Default)]
pub struct RunOptions {
    /// Overrides the scenario's tree file.
    pub bt: Option<PathBuf>,
    /// Caps simulated time below the scenario's own limit.
    pub max_sim_time: Option<f64>,
    /// Keep a per-step ground-truth trace.
    pub trace: bool,
    /// Replaces the seed from the scenario file.
    pub seed: Option<u64>,
    /// Called on every control cycle with the controller's costmap, the pose
    /// it planned from, and its output.
    pub control_hook: Option<Box<dyn FnMut(&CostSnapshot, &Pose2D, &ControlOutput)>>,
}

/// Ground truth after one simulation step, with the twist that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub wz: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_theta: f64,
    /// Index into the flattened lap-by-lap route, if a goal is active.
    pub waypoint: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub report: RunReport,
    #[serde(skip)]
    pub rows: Vec<MetricsRow>,
    pub outcomes: Vec<WaypointOutcome>,
    pub collisions: Vec<CollisionReport>,
    pub recoveries: Vec<RecoveryRecord>,
    pub lifecycle_log: Vec<TransitionLogEntry>,
    pub final_states: BTreeMap<String, NodeState>,
    pub control_audit: ControlAudit,
    pub amcl_updates: u64,
    /// Largest distance between true and estimated position at a control tick.
    pub max_localization_error: f64,
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub final_global: Option<Arc<CostSnapshot>>,
    #[serde(skip)]
    pub final_local: Option<Arc<CostSnapshot>>,
}

impl RunOutput {
    pub fn csv(&self) -> String {
        super::metrics::rows_to_csv(&self.rows)
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_costmaps(&self, dir: &FsPath) -> Result<(), AppError> {
        std::fs::create_dir_all(dir).map_err(|e| AppError::Io(e.to_string()))?;
        if let Some(g) = &self.final_global {
            save_costmap_pgm(&g.grid, &dir.join("global_costmap.pgm"))?;
        }
        if let Some(l) = &self.final_local {
            save_costmap_pgm(&l.grid, &dir.join("local_costmap.pgm"))?;
        }
        Ok(())
    }

    pub fn write_trace(&self, path: &FsPath) -> Result<(), AppError> {
        let mut s = String::from("t,x,y,theta,vx,wz,est_x,est_y,est_theta,waypoint\n");
        for r in &self.trace {
            let wp = r.waypoint.map(|w| w.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.t, r.x, r.y, r.theta, r.vx, r.wz, r.est_x, r.est_y, r.est_theta, wp
            ));
        }
        std::fs::write(path, s).map_err(|e| AppError::Io(e.to_string()))
    }
}

/// Loads the scenario's map and tree, then runs it.
pub fn run_scenario(cfg: &ScenarioConfig, opts: RunOptions) -> Result<RunOutput, AppError> {
    let map = load_map(&cfg.map.pgm, &cfg.map.yaml)?;
    let bt_path = opts.bt.clone().or_else(|| cfg.bt.clone());
    let xml = match &bt_path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?,
        None => DEFAULT_TREE_XML.to_string(),
    };
    run_with_map(cfg, Arc::new(map), &xml, opts)
}

struct Active {
    flat: usize,
    goal: Pose2D,
    started: f64,
    best: f64,
    improved_at: f64,
}

struct Loop {
    world: World,
    stack: NavStack,
    bt: ManagedServer<NavigatorNode>,
    logger: MetricsLogger,
    goals: Vec<(usize, usize, Pose2D)>,
    outcomes: Vec<WaypointOutcome>,
    recoveries: Vec<RecoveryRecord>,
    next_goal: usize,
    active: Option<Active>,
    ground_truth: bool,
    waypoint_timeout: f64,
    waypoint_progress: f64,
    max_loc_err: f64,
}

/// Runs a scenario against an already loaded map and tree source.
pub fn run_with_map(cfg: &ScenarioConfig, map: Arc<OccupancyGrid>, tree_xml: &str, opts: RunOptions) -> Result<RunOutput, AppError> {
    let wall = Instant::now();
    cfg.validate()?;
    crate::bt::parse_tree(tree_xml, &crate::bt::ActionRegistry::navigation())
        .map_err(|e| AppError::Config(format!("behavior tree: {e}")))?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let start = cfg.start_pose();
    let world_cfg = WorldConfig {
        dt: cfg.sim.dt,
        robot_radius: cfg.robot.radius,
        limits: cfg.limits,
        lidar: cfg.lidar,
        odom_noise: cfg.robot.odom_noise,
        seed,
    };
    let world = World::new(Arc::clone(&map), start, cfg.agent_states(), world_cfg)
        .map_err(|e| AppError::Config(e.to_string()))?;

    let cm_err = |e: crate::costmap::CostmapError| AppError::Config(e.to_string());
    let mut global = LayeredCostmap::new_global("global_costmap", map.meta, &cfg.costmap).map_err(cm_err)?;
    global.static_init(Arc::clone(&map)).map_err(cm_err)?;
    let mut local = LayeredCostmap::new_rolling("local_costmap", map.meta.resolution, &cfg.costmap).map_err(cm_err)?;
    local.static_init(Arc::clone(&map)).map_err(cm_err)?;

    let mut stack = NavStack::new(
        LocalizationNode::new(Arc::clone(&map), cfg.amcl, seed ^ 0x5eed_a3c1, start),
        PlannerServer::new(cfg.planner_server.clone()),
        ControllerServer::new(cfg.controller_server.clone()),
        RecoveryServer::new(cfg.recovery_server),
        global,
        local,
        start,
    );
    stack.control_hook = opts.control_hook;
    let bt = ManagedServer::new(SERVER_ORDER[4], NavigatorNode::new(tree_xml.to_string()));

    let route = cfg.route_poses();
    let goals: Vec<(usize, usize, Pose2D)> =
        (0..cfg.laps).flat_map(|lap| route.iter().enumerate().map(move |(i, p)| (lap, i, *p))).collect();
    let max_time = opts.max_sim_time.map_or(cfg.max_duration, |m| m.min(cfg.max_duration));

    let mut lp = Loop {
        world,
        stack,
        bt,
        logger: MetricsLogger::new(),
        goals,
        outcomes: Vec::new(),
        recoveries: Vec::new(),
        next_goal: 0,
        active: None,
        ground_truth: cfg.sim.ground_truth_localization,
        waypoint_timeout: cfg.waypoint_timeout,
        waypoint_progress: cfg.waypoint_progress,
        max_loc_err: 0.0,
    };

    let mut manager = LifecycleManager::new(SERVER_ORDER);
    let bringup = {
        let s = &mut lp.stack;
        manager.startup(&mut [&mut s.amcl, &mut s.planner, &mut s.controller, &mut s.recovery, &mut lp.bt], 0.0)
    };
    let mut trace = Vec::new();
    let mut fatal = None;
    if let Err(e) = bringup {
        fatal = Some(AppError::Lifecycle(e.to_string()));
    } else {
        lp.run(cfg, max_time, opts.trace.then_some(&mut trace));
    }

    let now = lp.world.time();
    let amcl_updates = lp.stack.amcl.hooks().amcl.as_ref().map_or(0, |a| a.updates());
    {
        let s = &mut lp.stack;
        manager.shutdown(&mut [&mut s.amcl, &mut s.planner, &mut s.controller, &mut s.recovery, &mut lp.bt], now);
    }
    let mut final_states = lp.stack.server_states();
    final_states.insert(lp.bt.name().to_string(), lp.bt.state());
    if let Some(e) = fatal {
        return Err(e);
    }

    let rows = lp.logger.rows().to_vec();
    let collisions = lp.world.collisions().to_vec();
    let report = emit_report(&rows, &lp.outcomes, &collisions);
    info!("run finished at t={now:.1}s\n{}", report.summary());
    Ok(RunOutput {
        report,
        rows,
        outcomes: lp.outcomes,
        collisions,
        recoveries: lp.recoveries,
        lifecycle_log: manager.log().to_vec(),
        final_states,
        control_audit: lp.stack.audit,
        amcl_updates,
        max_localization_error: lp.max_loc_err,
        wall_clock_s: wall.elapsed().as_secs_f64(),
        trace,
        final_global: Some(lp.stack.global.snapshot()),
        final_local: Some(lp.stack.local.snapshot()),
    })
}

fn every(dt: f64, hz: f64) -> u64 {
    ((1.0 / hz) / dt).round().max(1.0) as u64
}

impl Loop {
    fn run(&mut self, cfg: &ScenarioConfig, max_time: f64, mut trace: Option<&mut Vec<TraceRow>>) {
        let dt = cfg.sim.dt;
        let ctrl_every = every(dt, CONTROL_HZ);
        let local_every = every(dt, cfg.costmap.local_update_hz);
        let global_every = every(dt, cfg.costmap.global_update_hz);
        let mut finished = false;
        loop {
            let k = self.world.steps();
            let t = self.world.time();
            if !finished && (t >= max_time - 1e-9 || !self.world.collisions().is_empty()) {
                self.stop_navigation(t, if self.world.collisions().is_empty() { "time limit" } else { "collision" });
                finished = true;
            }
            if k % ctrl_every == 0 {
                self.sense(t, k % local_every == 0, k % global_every == 0);
                if !finished {
                    finished = self.manage_waypoints(t);
                }
                self.collect_recoveries();
            }
            let logged = {
                let v = self.world.robot.twist;
                self.logger.log_tick(t, self.world.odom_distance(), v.vx, v.wz).is_some()
            };
            if finished && logged {
                break;
            }
            let cmd = if finished { Twist::ZERO } else { self.stack.cmd };
            for c in self.world.step(cmd) {
                warn!("collision at t={:.2}: {:?}", c.timestamp, c.kind);
            }
            if let Some(tr) = trace.as_deref_mut() {
                let (p, v, e) = (self.world.robot.pose, self.world.robot.twist, self.stack.pose);
                tr.push(TraceRow {
                    t: self.world.time(),
                    x: p.x,
                    y: p.y,
                    theta: p.theta,
                    vx: v.vx,
                    wz: v.wz,
                    est_x: e.x,
                    est_y: e.y,
                    est_theta: e.theta,
                    waypoint: self.active.as_ref().map(|a| a.flat),
                });
            }
        }
    }

    /// Scan, localization and costmap updates for one control tick.
    fn sense(&mut self, t: f64, local: bool, global: bool) {
        let scan = self.world.scan();
        let s = &mut self.stack;
        s.odom = self.world.odom();
        s.velocity = self.world.robot.twist;
        s.odom_distance = self.world.odom_distance();
        if self.ground_truth {
            s.pose = self.world.robot.pose;
        } else if let Some(a) = s.amcl.hooks_mut().amcl.as_mut() {
            if let Err(e) = a.process(&s.odom, &scan) {
                warn!("localization update failed: {e}");
            }
            s.pose = a.pose(&s.odom);
        }
        self.max_loc_err = self.max_loc_err.max(s.pose.distance(&self.world.robot.pose));
        if local || global {
            let points = scan.to_points(&s.pose);
            if local {
                if let Err(e) = s.local.update(&s.pose, &points, t) {
                    warn!("local costmap: {e}");
                }
            }
            if global {
                if let Err(e) = s.global.update(&s.pose, &points, t) {
                    warn!("global costmap: {e}");
                }
            }
        }
        let pose = s.pose;
        s.recovery.hooks_mut().observe_pose(&pose);
    }

    fn collect_recoveries(&mut self) {
        for r in self.stack.take_finished_recoveries() {
            if r.outcome != RecoveryOutcome::Cancelled {
                self.logger.note_recovery(r.kind.name());
            }
            info!("[{:.2}] recovery {} -> {:?}", r.end, r.kind.name(), r.outcome);
            self.recoveries.push(r);
        }
    }

    fn finish_goal(&mut self, status: WaypointStatus, reason: Option<String>, t: f64) {
        let Some(a) = self.active.take() else { return };
        let (lap, index, _) = self.goals[a.flat];
        info!("[{t:.2}] waypoint {index} (lap {lap}) -> {status:?} {}", reason.as_deref().unwrap_or(""));
        self.outcomes.push(WaypointOutcome { lap, index, status, reason, started: a.started, ended: t });
    }

    /// Cancels the goal in progress and marks every remaining waypoint as not reached.
    fn stop_navigation(&mut self, t: f64, why: &str) {
        if self.active.is_some() {
            if let Ok(bt) = self.bt.active() {
                if let Some(nav) = bt.navigator.as_mut() {
                    nav.cancel(&mut self.stack, t);
                }
            }
            self.finish_goal(WaypointStatus::NotReached, Some(why.to_string()), t);
        }
        while self.next_goal < self.goals.len() {
            let (lap, index, _) = self.goals[self.next_goal];
            self.outcomes.push(WaypointOutcome {
                lap,
                index,
                status: WaypointStatus::NotReached,
                reason: Some(why.to_string()),
                started: t,
                ended: t,
            });
            self.next_goal += 1;
        }
        self.stack.cmd = Twist::ZERO;
    }

    /// Starts, ticks and closes out goals. Returns true once the route is done.
    fn manage_waypoints(&mut self, t: f64) -> bool {
        let Ok(bt) = self.bt.active() else {
            self.stop_navigation(t, "navigator inactive");
            return true;
        };
        let Some(nav) = bt.navigator.as_mut() else {
            self.stop_navigation(t, "navigator unconfigured");
            return true;
        };
        if self.active.is_none() {
            if self.next_goal >= self.goals.len() {
                return true;
            }
            let flat = self.next_goal;
            self.next_goal += 1;
            let goal = self.goals[flat].2;
            let d = self.stack.pose.distance(&goal);
            self.active = Some(Active { flat, goal, started: t, best: d, improved_at: t });
            if let Err(e) = nav.start(goal, &mut self.stack, t) {
                self.finish_goal(WaypointStatus::Skipped, Some(e.to_string()), t);
                return false;
            }
        }
        let status = nav.tick(&mut self.stack, t);
        let a = self.active.as_mut().expect("goal is active");
        match status {
            NavStatus::Succeeded => self.finish_goal(WaypointStatus::Succeeded, None, t),
            NavStatus::Aborted => self.finish_goal(WaypointStatus::Skipped, Some("navigation aborted".into()), t),
            NavStatus::Cancelled => self.finish_goal(WaypointStatus::Skipped, Some("navigation cancelled".into()), t),
            NavStatus::Running => {
                let d = self.stack.pose.distance(&a.goal);
                if d <= a.best - self.waypoint_progress {
                    a.best = d;
                    a.improved_at = t;
                } else if t - a.improved_at > self.waypoint_timeout {
                    nav.cancel(&mut self.stack, t);
                    self.finish_goal(WaypointStatus::Skipped, Some("no progress within waypoint timeout".into()), t);
                }
            }
        }
        if self.active.is_none() {
            self.stack.cmd = Twist::ZERO;
        }
        false
    }
}
