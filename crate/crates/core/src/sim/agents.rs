//! Non-reactive pedestrians that walk a cyclic list of waypoints.

use serde::{Deserialize, Serialize};

/// Distance at which an agent counts as having reached its waypoint.
pub const ARRIVAL_RADIUS: f64 = 0.05;
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentWaypoint {
    pub x: f64,
    pub y: f64,
    /// Overrides the agent's default dwell at this waypoint.
    pub dwell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub radius: f64,
    pub dwell: f64,
    pub waypoints: Vec<AgentWaypoint>,
    pub target: usize,
    pub dwell_left: f64,
}

impl AgentState {
    pub fn new(id: usize, x: f64, y: f64, speed: f64, radius: f64, dwell: f64, waypoints: Vec<AgentWaypoint>) -> Self {
        Self { id, x, y, speed, radius, dwell, waypoints, target: 0, dwell_left: 0.0 }
    }

    pub fn is_dwelling(&self) -> bool {
        self.dwell_left > TIME_EPS
    }

    fn arrive(&mut self) {
        let wp = self.waypoints[self.target];
        self.dwell_left = wp.dwell.unwrap_or(self.dwell);
        self.target = (self.target + 1) % self.waypoints.len();
    }

    pub fn step(&mut self, dt: f64) {
        if self.waypoints.is_empty() {
            return;
        }
        if self.is_dwelling() {
            self.dwell_left -= dt;
            return;
        }
        let wp = self.waypoints[self.target];
        let (dx, dy) = (wp.x - self.x, wp.y - self.y);
        let d = dx.hypot(dy);
        if d <= ARRIVAL_RADIUS {
            self.arrive();
            return;
        }
        let s = (self.speed * dt).min(d);
        self.x += dx / d * s;
        self.y += dy / d * s;
        if d - s <= ARRIVAL_RADIUS {
            self.arrive();
        }
    }
}

pub fn step_agents(agents: &mut [AgentState], dt: f64) {
    for a in agents {
        a.step(dt);
    }
}
