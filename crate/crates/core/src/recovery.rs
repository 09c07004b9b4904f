//! Recovery server: clear-costmap, spin-in-place, and wait behaviors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::RequestId;
use crate::costmap::{ClearScope, LayeredCostmap};
use crate::geometry::{wrap_angle, Pose2D, Twist};
use crate::lifecycle::{LifecycleHooks, ManagedServer, Transition};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("recovery server is not active")]
    ServerUnavailable,
    #[error("invalid recovery input: {0}")]
    InvalidInput(String),
    #[error("another recovery is already running")]
    BusyRejected,
    #[error("recovery budget exhausted without progress")]
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecoveryKind {
    ClearCostmap { scope: ClearScope },
    Spin { target_yaw: f64 },
    Wait { duration: f64 },
}

impl RecoveryKind {
    /// Name used in logs and per-kind counts.
    pub fn name(&self) -> &'static str {
        match self {
            RecoveryKind::ClearCostmap { scope: ClearScope::Global } => "clear_costmap_global",
            RecoveryKind::ClearCostmap { scope: ClearScope::Local } => "clear_costmap_local",
            RecoveryKind::ClearCostmap { scope: ClearScope::Both } => "clear_costmap_both",
            RecoveryKind::Spin { .. } => "spin",
            RecoveryKind::Wait { .. } => "wait",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecoveryOutcome {
    Success,
    Failure,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRecord {
    pub kind: RecoveryKind,
    pub start: f64,
    pub end: f64,
    pub outcome: RecoveryOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryParams {
    pub spin_target: f64,
    /// Commanded yaw rate during spins, rad/s.
    pub spin_speed: f64,
    /// A spin that has not finished after this many seconds fails.
    pub spin_timeout: f64,
    pub wait_duration: f64,
    /// Recoveries allowed before the robot must move `progress_distance`.
    pub max_without_progress: usize,
    pub progress_distance: f64,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        Self {
            spin_target: 1.57,
            spin_speed: 0.5,
            spin_timeout: 15.0,
            wait_duration: 5.0,
            max_without_progress: 30,
            progress_distance: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Running {
    Spin { id: RequestId, target: f64, turned: f64, last_yaw: f64, start: f64 },
    Wait { id: RequestId, duration: f64, start: f64 },
}

impl Running {
    fn id(&self) -> RequestId {
        match *self {
            Running::Spin { id, .. } | Running::Wait { id, .. } => id,
        }
    }

    fn kind(&self) -> RecoveryKind {
        match *self {
            Running::Spin { target, .. } => RecoveryKind::Spin { target_yaw: target },
            Running::Wait { duration, .. } => RecoveryKind::Wait { duration },
        }
    }

    fn start(&self) -> f64 {
        match *self {
            Running::Spin { start, .. } | Running::Wait { start, .. } => start,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecoveryStatus {
    Running(Twist),
    Done(RecoveryRecord),
}

#[derive(Debug)]
pub struct RecoveryServer {
    pub params: RecoveryParams,
    running: Option<Running>,
    records: Vec<RecoveryRecord>,
    /// Records not yet collected by the metrics logger.
    unreported: Vec<RecoveryRecord>,
    next_id: RequestId,
    since_progress: usize,
    anchor: Option<Pose2D>,
}

impl LifecycleHooks for RecoveryServer {
    fn on_transition(&mut self, t: Transition) -> Result<(), String> {
        match t {
            Transition::Configure => {
                let p = &self.params;
                if !(p.spin_target > 0.0 && p.spin_speed > 0.0 && p.wait_duration > 0.0 && p.spin_timeout > 0.0) {
                    return Err(format!("recovery parameters must be > 0: {p:?}"));
                }
            }
            Transition::Deactivate | Transition::Cleanup | Transition::Shutdown => self.running = None,
            Transition::Activate => {}
        }
        Ok(())
    }
}

impl RecoveryServer {
    pub fn new(params: RecoveryParams) -> Self {
        Self {
            params,
            running: None,
            records: Vec::new(),
            unreported: Vec::new(),
            next_id: 1,
            since_progress: 0,
            anchor: None,
        }
    }

    pub fn records(&self) -> &[RecoveryRecord] {
        &self.records
    }

    /// Records completed since the last call.
    pub fn drain_unreported(&mut self) -> Vec<RecoveryRecord> {
        std::mem::take(&mut self.unreported)
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.kind.name().to_string()).or_insert(0) += 1;
        }
        m
    }

    pub fn is_busy(&self) -> bool {
        self.running.is_some()
    }

    pub fn active_request(&self) -> Option<RequestId> {
        self.running.map(|r| r.id())
    }

    /// Restarts the no-progress budget, e.g. for a new goal.
    pub fn reset_budget(&mut self) {
        self.since_progress = 0;
        self.anchor = None;
    }

    /// Feeds the robot pose so the budget refills once the robot has moved.
    pub fn observe_pose(&mut self, pose: &Pose2D) {
        if let Some(a) = self.anchor {
            if a.distance(pose) >= self.params.progress_distance {
                self.reset_budget();
            }
        }
    }

    fn admit(&mut self, pose: &Pose2D) -> Result<(), RecoveryError> {
        if self.running.is_some() {
            return Err(RecoveryError::BusyRejected);
        }
        if self.since_progress >= self.params.max_without_progress {
            return Err(RecoveryError::BudgetExhausted);
        }
        self.since_progress += 1;
        if self.anchor.is_none() {
            self.anchor = Some(*pose);
        }
        Ok(())
    }

    fn push(&mut self, rec: RecoveryRecord) -> RecoveryRecord {
        self.records.push(rec.clone());
        self.unreported.push(rec.clone());
        rec
    }

    /// Empties the clearable layers of the selected costmaps. Always succeeds once admitted.
    pub fn execute_clear(
        &mut self,
        scope: ClearScope,
        global: &mut LayeredCostmap,
        local: &mut LayeredCostmap,
        pose: &Pose2D,
        now: f64,
    ) -> Result<RecoveryRecord, RecoveryError> {
        self.admit(pose)?;
        if scope.includes_global() {
            global.clear_except_static();
        }
        if scope.includes_local() {
            local.clear_except_static();
        }
        Ok(self.push(RecoveryRecord {
            kind: RecoveryKind::ClearCostmap { scope },
            start: now,
            end: now,
            outcome: RecoveryOutcome::Success,
        }))
    }

    pub fn start_spin(&mut self, target_yaw: f64, odom_yaw: f64, pose: &Pose2D, now: f64) -> Result<RequestId, RecoveryError> {
        if !(target_yaw > 0.0 && target_yaw.is_finite()) {
            return Err(RecoveryError::InvalidInput(format!("spin target must be > 0, got {target_yaw}")));
        }
        self.admit(pose)?;
        let id = self.next_id;
        self.next_id += 1;
        self.running = Some(Running::Spin { id, target: target_yaw, turned: 0.0, last_yaw: odom_yaw, start: now });
        Ok(id)
    }

    pub fn start_wait(&mut self, duration: f64, pose: &Pose2D, now: f64) -> Result<RequestId, RecoveryError> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(RecoveryError::InvalidInput(format!("wait duration must be > 0, got {duration}")));
        }
        self.admit(pose)?;
        let id = self.next_id;
        self.next_id += 1;
        self.running = Some(Running::Wait { id, duration, start: now });
        Ok(id)
    }

    fn finish(&mut self, outcome: RecoveryOutcome, now: f64) -> Option<RecoveryRecord> {
        let r = self.running.take()?;
        Some(self.push(RecoveryRecord { kind: r.kind(), start: r.start(), end: now.max(r.start()), outcome }))
    }

    /// Advances the running behavior. `odom_yaw` is the odometry heading.
    pub fn step(&mut self, id: RequestId, odom_yaw: f64, now: f64) -> Option<RecoveryStatus> {
        let running = self.running.as_mut().filter(|r| r.id() == id)?;
        match running {
            Running::Spin { target, turned, last_yaw, start, .. } => {
                *turned += wrap_angle(odom_yaw - *last_yaw).abs();
                *last_yaw = odom_yaw;
                if *turned >= *target {
                    return self.finish(RecoveryOutcome::Success, now).map(RecoveryStatus::Done);
                }
                if now - *start > self.params.spin_timeout {
                    return self.finish(RecoveryOutcome::Failure, now).map(RecoveryStatus::Done);
                }
                Some(RecoveryStatus::Running(Twist::new(0.0, self.params.spin_speed)))
            }
            Running::Wait { duration, start, .. } => {
                if now >= *start + *duration - TIME_EPS {
                    return self.finish(RecoveryOutcome::Success, now).map(RecoveryStatus::Done);
                }
                Some(RecoveryStatus::Running(Twist::ZERO))
            }
        }
    }

    pub fn cancel(&mut self, id: RequestId, now: f64) -> Option<RecoveryRecord> {
        if self.active_request() == Some(id) {
            self.finish(RecoveryOutcome::Cancelled, now)
        } else {
            None
        }
    }

    /// Angle turned so far by a running spin.
    pub fn spin_progress(&self) -> Option<f64> {
        match self.running {
            Some(Running::Spin { turned, .. }) => Some(turned),
            _ => None,
        }
    }
}

/// Lifecycle-checked clear.
pub fn execute_clear(
    server: &mut ManagedServer<RecoveryServer>,
    scope: ClearScope,
    global: &mut LayeredCostmap,
    local: &mut LayeredCostmap,
    pose: &Pose2D,
    now: f64,
) -> Result<RecoveryRecord, RecoveryError> {
    server.active().map_err(|_| RecoveryError::ServerUnavailable)?.execute_clear(scope, global, local, pose, now)
}
