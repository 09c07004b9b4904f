//! Fixed-step 2D world: a unicycle robot, a range sensor, noisy odometry and
//! non-reactive pedestrian discs.

pub mod agents;
pub mod lidar;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::control::VelocityLimits;
use crate::geometry::{footprint_cells, integrate_twist, Footprint, Pose2D, Twist};
use crate::grid::{Occupancy, OccupancyGrid};
use crate::localization::{sample_delta, NoiseParams, OdomDelta};
use crate::sensor::LaserScan;

pub use agents::{step_agents, AgentState, AgentWaypoint, ARRIVAL_RADIUS};
pub use lidar::{cast_beam, ray_disc, raycast, LidarSpec};

pub const DEFAULT_DT: f64 = 0.05;

const STREAM_LIDAR: u64 = 1;
const STREAM_ODOM: u64 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation setup: {0}")]
    InvalidSetup(String),
    #[error("robot pose ({x:.3}, {y:.3}) is outside the map")]
    PoseOutOfMap { x: f64, y: f64 },
}

/// Ground truth that the navigation stack never sees directly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrueState {
    pub pose: Pose2D,
    /// Actual twist after acceleration limiting.
    pub twist: Twist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", content = "agent", rename_all = "lowercase")]
pub enum CollisionKind {
    Static,
    Agent(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionReport {
    pub timestamp: f64,
    pub kind: CollisionKind,
}

#[derive(Debug, Clone, Copy)]
pub struct WorldConfig {
    pub dt: f64,
    pub robot_radius: f64,
    pub limits: VelocityLimits,
    pub lidar: LidarSpec,
    pub odom_noise: NoiseParams,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            robot_radius: 0.22,
            limits: VelocityLimits::default(),
            lidar: LidarSpec::default(),
            odom_noise: NoiseParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub map: std::sync::Arc<OccupancyGrid>,
    pub robot: TrueState,
    pub agents: Vec<AgentState>,
    steps: u64,
    odom: Pose2D,
    odom_distance: f64,
    lidar_rng: ChaCha8Rng,
    odom_rng: ChaCha8Rng,
    contacts: BTreeSet<CollisionKind>,
    collisions: Vec<CollisionReport>,
}

impl World {
    pub fn new(
        map: std::sync::Arc<OccupancyGrid>,
        start: Pose2D,
        agents: Vec<AgentState>,
        config: WorldConfig,
    ) -> Result<Self, SimError> {
        if !(config.dt > 0.0) || !(config.robot_radius > 0.0) {
            return Err(SimError::InvalidSetup("dt and robot radius must be > 0".into()));
        }
        config.limits.validate().map_err(|e| SimError::InvalidSetup(e.to_string()))?;
        config.lidar.validate().map_err(SimError::InvalidSetup)?;
        config.odom_noise.validate().map_err(SimError::InvalidSetup)?;
        for a in &agents {
            if !(a.speed >= 0.0) || !(a.radius > 0.0) || !(a.dwell >= 0.0) {
                return Err(SimError::InvalidSetup(format!("agent {} needs speed >= 0, radius > 0, dwell >= 0", a.id)));
            }
        }
        if !map.meta.contains_point(start.x, start.y) {
            return Err(SimError::PoseOutOfMap { x: start.x, y: start.y });
        }
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(config.seed);
            r.set_stream(s);
            r
        };
        let mut w = Self {
            lidar_rng: stream(STREAM_LIDAR),
            odom_rng: stream(STREAM_ODOM),
            config,
            map,
            robot: TrueState { pose: start, twist: Twist::ZERO },
            agents,
            steps: 0,
            odom: start,
            odom_distance: 0.0,
            contacts: BTreeSet::new(),
            collisions: Vec::new(),
        };
        w.check_collision();
        Ok(w)
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Odometry-frame pose, drifting from the truth with the noise model.
    pub fn odom(&self) -> Pose2D {
        self.odom
    }

    /// Sum of noisy odometric translation increments.
    pub fn odom_distance(&self) -> f64 {
        self.odom_distance
    }

    pub fn collisions(&self) -> &[CollisionReport] {
        &self.collisions
    }

    /// Moves the actual twist toward `commanded` within the acceleration
    /// limits, then advances everything by one step. Returns collisions that
    /// started during this step.
    pub fn step(&mut self, commanded: Twist) -> Vec<CollisionReport> {
        let dt = self.config.dt;
        let lim = self.config.limits;
        let target_v = commanded.vx.clamp(-lim.vx_max, lim.vx_max);
        let target_w = commanded.wz.clamp(-lim.wz_max, lim.wz_max);
        let cur = self.robot.twist;
        let vx = cur.vx + (target_v - cur.vx).clamp(-lim.ax * dt, lim.ax * dt);
        let wz = cur.wz + (target_w - cur.wz).clamp(-lim.aw * dt, lim.aw * dt);
        let twist = Twist::new(vx, wz);
        let prev = self.robot.pose;
        let next = integrate_twist(&prev, &twist, dt);
        self.robot = TrueState { pose: next, twist };

        let delta = OdomDelta::between(&prev, &next);
        let noisy = sample_delta(&delta, &self.config.odom_noise, &mut self.odom_rng);
        self.odom = noisy.apply(&self.odom);
        self.odom_distance += noisy.trans.abs();

        step_agents(&mut self.agents, dt);
        self.steps += 1;
        let before = self.collisions.len();
        self.check_collision();
        self.collisions[before..].to_vec()
    }

    /// Contacts touching the robot right now, without episode bookkeeping.
    pub fn contacts_now(&self) -> BTreeSet<CollisionKind> {
        let pose = self.robot.pose;
        let r = self.config.robot_radius;
        let mut now = BTreeSet::new();
        let fp = Footprint { radius: r };
        let cells = footprint_cells(&fp, &pose, &self.map.meta);
        if cells.cells.iter().any(|c| self.map.get(*c) == Some(Occupancy::Occupied)) {
            now.insert(CollisionKind::Static);
        }
        for a in &self.agents {
            if (a.x - pose.x).hypot(a.y - pose.y) < r + a.radius {
                now.insert(CollisionKind::Agent(a.id));
            }
        }
        now
    }

    /// Records a report for every contact that was not already in progress.
    pub fn check_collision(&mut self) -> Option<CollisionReport> {
        let now = self.contacts_now();
        let t = self.time();
        let mut first = None;
        for k in now.difference(&self.contacts) {
            let rep = CollisionReport { timestamp: t, kind: *k };
            first.get_or_insert(rep);
            self.collisions.push(rep);
        }
        self.contacts = now;
        first
    }

    /// One sweep of the range sensor from the true pose.
    pub fn scan(&mut self) -> LaserScan {
        let spec = self.config.lidar;
        let pose = self.robot.pose;
        let discs: Vec<(f64, f64, f64)> = self.agents.iter().map(|a| (a.x, a.y, a.radius)).collect();
        let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).unwrap());
        let mut ranges = Vec::with_capacity(spec.beams);
        let mut no_return = Vec::with_capacity(spec.beams);
        for i in 0..spec.beams {
            let a = spec.angle_min() + spec.angle_increment() * i as f64;
            match cast_beam(&self.map, &pose, a, spec.max_range, &discs) {
                Some(r) => {
                    let n = noise.as_ref().map_or(0.0, |n| n.sample(&mut self.lidar_rng));
                    ranges.push((r + n).clamp(0.0, spec.max_range));
                    no_return.push(false);
                }
                None => {
                    ranges.push(spec.max_range);
                    no_return.push(true);
                }
            }
        }
        LaserScan {
            angle_min: spec.angle_min(),
            angle_increment: spec.angle_increment(),
            max_range: spec.max_range,
            mount_height: spec.mount_height,
            ranges,
            no_return,
        }
    }
}

/// Stand-alone odometry corruption, identical to the filter's motion law.
pub fn noisy_odometry<R: rand::Rng + ?Sized>(delta: &OdomDelta, noise: &NoiseParams, rng: &mut R) -> OdomDelta {
    sample_delta(delta, noise, rng)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;
    use std::sync::Arc;

    use super::*;
    use crate::geometry::GridMeta;

    fn room() -> Arc<OccupancyGrid> {
        let meta = GridMeta::new(0.1, 0.0, 0.0, 100, 100).unwrap();
        let mut g = OccupancyGrid::new_filled(meta, Occupancy::Free);
        g.fill_rect(0.0, 0.0, 10.0, 0.1, Occupancy::Occupied);
        g.fill_rect(0.0, 9.9, 10.0, 10.0, Occupancy::Occupied);
        g.fill_rect(0.0, 0.0, 0.1, 10.0, Occupancy::Occupied);
        g.fill_rect(9.9, 0.0, 10.0, 10.0, Occupancy::Occupied);
        Arc::new(g)
    }

    fn quiet(dt: f64) -> WorldConfig {
        WorldConfig {
            dt,
            odom_noise: NoiseParams::ZERO,
            lidar: LidarSpec { noise_sigma: 0.0, ..Default::default() },
            limits: VelocityLimits { vx_max: 5.0, wz_max: 5.0, ax: 0.5, aw: 100.0 },
            ..Default::default()
        }
    }

    #[test]
    fn accel_clamp_from_rest() {
        let mut w = World::new(room(), Pose2D::new(5.0, 5.0, 0.0), vec![], quiet(0.1)).unwrap();
        w.step(Twist::new(1.0, 0.0));
        assert!((w.robot.twist.vx - 0.05).abs() < 1e-12);
        assert!((w.time() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pure_rotation_and_straight_motion() {
        let mut cfg = quiet(1.0);
        cfg.limits.ax = 100.0;
        let mut w = World::new(room(), Pose2D::new(5.0, 5.0, 0.0), vec![], cfg).unwrap();
        w.step(Twist::new(0.0, FRAC_PI_2));
        assert!((w.robot.pose.theta - FRAC_PI_2).abs() < 1e-12);
        assert_eq!((w.robot.pose.x, w.robot.pose.y), (5.0, 5.0));
        let mut w = World::new(room(), Pose2D::new(5.0, 5.0, 0.0), vec![], cfg).unwrap();
        w.step(Twist::new(1.0, 0.0));
        assert!((w.robot.pose.x - 6.0).abs() < 1e-12);
        assert_eq!(w.odom(), w.robot.pose);
        assert!((w.odom_distance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scan_reads_walls_and_agents() {
        let agent = AgentState::new(0, 7.0, 5.0, 0.0, 0.3, 0.0, vec![]);
        let mut w = World::new(room(), Pose2D::new(5.0, 5.0, 0.0), vec![agent], quiet(0.05)).unwrap();
        let s = w.scan();
        let mid = s.len() / 2;
        assert!((s.beam_angle(mid) - 0.0).abs() < 0.01);
        assert!((s.ranges[mid] - 1.7).abs() < 0.05);
        let back = s.ranges[0];
        assert!(back > 0.0 && back <= 8.0);
    }

    #[test]
    fn collision_episodes() {
        let agent = AgentState::new(3, 5.5, 5.0, 0.0, 0.3, 0.0, vec![]);
        let mut cfg = quiet(0.05);
        cfg.robot_radius = 0.3;
        let mut w = World::new(room(), Pose2D::new(5.0, 5.0, 0.0), vec![agent], cfg).unwrap();
        assert_eq!(w.collisions().len(), 1);
        assert_eq!(w.collisions()[0].kind, CollisionKind::Agent(3));
        w.step(Twist::ZERO);
        w.step(Twist::ZERO);
        assert_eq!(w.collisions().len(), 1);

        let agent = AgentState::new(3, 5.61, 5.0, 0.0, 0.3, 0.0, vec![]);
        let w = World::new(room(), Pose2D::new(5.0, 5.0, 0.0), vec![agent], cfg).unwrap();
        assert!(w.collisions().is_empty());

        let w = World::new(room(), Pose2D::new(0.3, 5.0, 0.0), vec![], cfg).unwrap();
        assert_eq!(w.collisions()[0].kind, CollisionKind::Static);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let run = || {
            let cfg = WorldConfig { seed: 9, ..Default::default() };
            let mut w = World::new(room(), Pose2D::new(5.0, 5.0, 0.0), vec![], cfg).unwrap();
            let mut out = Vec::new();
            for k in 0..40 {
                w.step(Twist::new(0.3, if k % 2 == 0 { 0.2 } else { -0.1 }));
                out.push((w.odom(), w.scan().ranges[100]));
            }
            out
        };
        assert_eq!(run(), run());
    }
}
