//! Goal-level driver: owns a tree and a blackboard and ticks the tree until
//! the controller reports arrival or the tree gives up.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use super::blackboard::{self, Blackboard};
use super::node::{ActionBackend, NodeStatus, TickContext};
use super::xml::TreeSpec;
use crate::geometry::Pose2D;

/// What the navigator needs from the task servers beyond the action contract.
pub trait NavBackend: ActionBackend {
    fn current_pose(&self) -> Pose2D;
    fn goal_in_map(&self, goal: &Pose2D) -> bool;
    /// Called once per goal before the first tick.
    fn begin_navigation(&mut self, goal: &Pose2D, now: f64);
    /// Set by the controller when FollowPath finished at the goal.
    fn goal_reached(&self) -> bool;
    /// Cumulative recovery counts keyed by kind.
    fn recovery_counts(&self) -> BTreeMap<String, usize>;
    fn odometric_distance(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NavStatus {
    Running,
    Succeeded,
    Aborted,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NavResult {
    pub status: NavStatus,
    pub recoveries: BTreeMap<String, usize>,
    pub duration: f64,
    pub distance: f64,
}

impl NavResult {
    pub fn total_recoveries(&self) -> usize {
        self.recoveries.values().sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("goal ({x:.3}, {y:.3}) is outside the map")]
    RejectedGoal { x: f64, y: f64 },
}

pub struct Navigator {
    tree: TreeSpec,
    bb: Blackboard,
    goal: Option<Pose2D>,
    status: NavStatus,
    started_at: f64,
    ended_at: Option<f64>,
    start_counts: BTreeMap<String, usize>,
    start_distance: f64,
    end_counts: BTreeMap<String, usize>,
    end_distance: f64,
    ticks: u64,
}

impl Navigator {
    pub fn new(tree: TreeSpec) -> Self {
        Self {
            tree,
            bb: Blackboard::new(),
            goal: None,
            status: NavStatus::Cancelled,
            started_at: 0.0,
            ended_at: None,
            start_counts: BTreeMap::new(),
            start_distance: 0.0,
            end_counts: BTreeMap::new(),
            end_distance: 0.0,
            ticks: 0,
        }
    }

    pub fn tree(&self) -> &TreeSpec {
        &self.tree
    }

    pub fn blackboard(&self) -> &Blackboard {
        &self.bb
    }

    pub fn blackboard_mut(&mut self) -> &mut Blackboard {
        &mut self.bb
    }

    pub fn status(&self) -> NavStatus {
        self.status
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Accepts a new goal, halting any navigation in progress.
    pub fn start<B: NavBackend>(&mut self, goal: Pose2D, backend: &mut B, now: f64) -> Result<(), NavError> {
        if !backend.goal_in_map(&goal) {
            return Err(NavError::RejectedGoal { x: goal.x, y: goal.y });
        }
        if self.status == NavStatus::Running {
            self.cancel(backend, now);
        }
        self.halt_tree(backend, now);
        self.bb.remove(blackboard::PATH);
        self.bb.set(blackboard::GOAL, goal);
        self.bb.set(blackboard::POSE, backend.current_pose());
        backend.begin_navigation(&goal, now);
        self.goal = Some(goal);
        self.status = NavStatus::Running;
        self.started_at = now;
        self.ended_at = None;
        self.start_counts = backend.recovery_counts();
        self.start_distance = backend.odometric_distance();
        self.ticks = 0;
        Ok(())
    }

    /// One tick of the tree. Returns the navigation status after the tick.
    pub fn tick<B: NavBackend>(&mut self, backend: &mut B, now: f64) -> NavStatus {
        if self.status != NavStatus::Running {
            return self.status;
        }
        self.bb.set(blackboard::POSE, backend.current_pose());
        let mut ctx = TickContext { bb: &mut self.bb, backend, now };
        let root = self.tree.root.tick(&mut ctx);
        self.ticks += 1;
        let outcome = match root {
            NodeStatus::Success if backend.goal_reached() => Some(NavStatus::Succeeded),
            NodeStatus::Failure => Some(NavStatus::Aborted),
            _ => None,
        };
        if let Some(s) = outcome {
            self.finish(s, backend, now);
        }
        self.status
    }

    pub fn cancel<B: NavBackend>(&mut self, backend: &mut B, now: f64) {
        if self.status == NavStatus::Running {
            self.finish(NavStatus::Cancelled, backend, now);
        }
    }

    fn halt_tree<B: NavBackend>(&mut self, backend: &mut B, now: f64) {
        let mut ctx = TickContext { bb: &mut self.bb, backend, now };
        self.tree.root.halt(&mut ctx);
    }

    fn finish<B: NavBackend>(&mut self, status: NavStatus, backend: &mut B, now: f64) {
        self.halt_tree(backend, now);
        self.status = status;
        self.ended_at = Some(now);
        self.end_counts = backend.recovery_counts();
        self.end_distance = backend.odometric_distance();
    }

    /// Statistics for the current or most recent goal.
    pub fn result<B: NavBackend>(&self, backend: &B, now: f64) -> NavResult {
        let (end, counts, dist) = match self.ended_at {
            Some(t) => (t, self.end_counts.clone(), self.end_distance),
            None => (now, backend.recovery_counts(), backend.odometric_distance()),
        };
        let recoveries = counts
            .into_iter()
            .filter_map(|(k, v)| {
                let d = v.saturating_sub(self.start_counts.get(&k).copied().unwrap_or(0));
                (d > 0).then_some((k, d))
            })
            .collect();
        NavResult { status: self.status, recoveries, duration: end - self.started_at, distance: dist - self.start_distance }
    }
}

/// A world the navigator can be driven in: exposes the servers and advances time.
pub trait NavEnvironment {
    type Backend: NavBackend;
    fn backend(&mut self) -> &mut Self::Backend;
    fn now(&self) -> f64;
    /// Advances simulated time by `dt`, running everything but the tree.
    fn advance(&mut self, dt: f64);
}

/// Ticks the tree every `tick_period` of simulated time until the goal is
/// reached, the tree fails, or `max_duration` elapses (reported as Cancelled).
pub fn navigate<E: NavEnvironment>(
    nav: &mut Navigator,
    env: &mut E,
    goal: Pose2D,
    tick_period: f64,
    max_duration: f64,
) -> Result<NavResult, NavError> {
    let t0 = env.now();
    nav.start(goal, env.backend(), t0)?;
    loop {
        let now = env.now();
        let status = nav.tick(env.backend(), now);
        if status != NavStatus::Running {
            break;
        }
        if now - t0 >= max_duration {
            nav.cancel(env.backend(), now);
            break;
        }
        env.advance(tick_period);
    }
    let now = env.now();
    Ok(nav.result(env.backend(), now))
}
