//! Monte-Carlo localization against a known occupancy grid.

pub mod field;
pub mod motion;
pub mod particles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose2D, wrap_angle};
use crate::grid::{Occupancy, OccupancyGrid};
use crate::sensor::LaserScan;

pub use field::{measurement_update, LikelihoodField, MeasurementInfo, SensorModel};
pub use motion::{motion_update, sample_delta, NoiseParams, OdomDelta};
pub use particles::{estimate, normalize_weights, resample, resample_with_offset, Covariance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("map has no occupied cells")]
    EmptyMap,
    #[error("map has no free cells to place particles in")]
    NoFreeSpace,
    #[error("scan has no beams")]
    EmptyScan,
    #[error("particle set is empty")]
    NoParticles,
    #[error("invalid localization parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
}

impl Particle {
    pub fn new(pose: Pose2D, weight: f64) -> Self {
        Self { pose, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmclParams {
    pub particles: usize,
    pub noise: NoiseParams,
    pub sensor: SensorModel,
    pub beam_subsample: usize,
    /// Filter updates run once odometry moved this far ...
    pub update_min_d: f64,
    /// ... or turned this much.
    pub update_min_a: f64,
    /// Standard deviations of the initial cloud around the initial pose.
    pub init_std_xy: f64,
    pub init_std_yaw: f64,
}

impl Default for AmclParams {
    fn default() -> Self {
        Self {
            particles: 500,
            noise: NoiseParams::default(),
            sensor: SensorModel::default(),
            beam_subsample: 30,
            update_min_d: 0.1,
            update_min_a: 0.2,
            init_std_xy: 0.1,
            init_std_yaw: 0.05,
        }
    }
}

impl AmclParams {
    pub fn validate(&self) -> Result<(), LocalizationError> {
        if self.particles == 0 || self.beam_subsample == 0 {
            return Err(LocalizationError::InvalidParams("particle and beam counts must be >= 1".into()));
        }
        self.noise.validate().map_err(LocalizationError::InvalidParams)?;
        self.sensor.validate()?;
        if !(self.update_min_d >= 0.0 && self.update_min_a >= 0.0 && self.init_std_xy >= 0.0 && self.init_std_yaw >= 0.0) {
            return Err(LocalizationError::InvalidParams("thresholds and spreads must be >= 0".into()));
        }
        Ok(())
    }
}

/// Particle filter plus the bookkeeping that turns its estimate and the
/// odometry stream into a continuous pose.
#[derive(Debug, Clone)]
pub struct Amcl {
    pub params: AmclParams,
    field: LikelihoodField,
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
    free_cells: Vec<usize>,
    /// Odometry pose at the last filter update.
    odom_ref: Option<Pose2D>,
    estimate: Pose2D,
    covariance: Covariance,
    updates: u64,
    resets: u64,
}

impl Amcl {
    pub fn new(map: &OccupancyGrid, params: AmclParams, seed: u64) -> Result<Self, LocalizationError> {
        params.validate()?;
        let field = LikelihoodField::build(map, params.sensor)?;
        let free_cells: Vec<usize> =
            map.cells.iter().enumerate().filter(|(_, c)| **c == Occupancy::Free).map(|(i, _)| i).collect();
        Ok(Self {
            params,
            field,
            particles: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            free_cells,
            odom_ref: None,
            estimate: Pose2D::identity(),
            covariance: [[0.0; 3]; 3],
            updates: 0,
            resets: 0,
        })
    }

    pub fn field(&self) -> &LikelihoodField {
        &self.field
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn set_particles(&mut self, particles: Vec<Particle>) {
        self.particles = particles;
        self.refresh_estimate();
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn uniform_resets(&self) -> u64 {
        self.resets
    }

    /// Gaussian cloud around `pose`.
    pub fn init_at(&mut self, pose: Pose2D) {
        let n = self.params.particles;
        let w = 1.0 / n as f64;
        let sx = Normal::new(0.0, self.params.init_std_xy.max(1e-12)).unwrap();
        let sa = Normal::new(0.0, self.params.init_std_yaw.max(1e-12)).unwrap();
        let rng = &mut self.rng;
        self.particles = (0..n)
            .map(|_| {
                Particle::new(
                    Pose2D::new(pose.x + sx.sample(rng), pose.y + sx.sample(rng), pose.theta + sa.sample(rng)),
                    w,
                )
            })
            .collect();
        self.odom_ref = None;
        self.refresh_estimate();
    }

    /// Particles spread uniformly over free space with uniform heading.
    pub fn init_uniform(&mut self) -> Result<(), LocalizationError> {
        if self.free_cells.is_empty() {
            return Err(LocalizationError::NoFreeSpace);
        }
        let n = self.params.particles;
        let meta = self.field.meta;
        let w = 1.0 / n as f64;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let idx = self.free_cells[self.rng.random_range(0..self.free_cells.len())];
            let c = meta.cell_of(idx);
            let x = meta.origin.x + (c.cx as f64 + self.rng.random::<f64>()) * meta.resolution;
            let y = meta.origin.y + (c.cy as f64 + self.rng.random::<f64>()) * meta.resolution;
            let th = self.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            out.push(Particle::new(Pose2D::new(x, y, th), w));
        }
        self.particles = out;
        self.odom_ref = None;
        self.refresh_estimate();
        Ok(())
    }

    fn refresh_estimate(&mut self) {
        if !self.particles.is_empty() {
            let (e, c) = estimate(&self.particles);
            self.estimate = e;
            self.covariance = c;
        }
    }

    /// One motion + measurement + resample cycle.
    pub fn update(&mut self, delta: &OdomDelta, scan: &LaserScan) -> Result<MeasurementInfo, LocalizationError> {
        if self.particles.is_empty() {
            return Err(LocalizationError::NoParticles);
        }
        let noise = self.params.noise;
        motion_update(&mut self.particles, delta, &noise, &mut self.rng);
        let info = measurement_update(&mut self.particles, scan, &self.field, self.params.beam_subsample)?;
        self.refresh_estimate();
        self.particles = resample(&self.particles, &mut self.rng);
        self.updates += 1;
        if info.uniform_reset {
            self.resets += 1;
        }
        Ok(info)
    }

    /// Feeds an odometry pose and scan; the filter runs only once the robot
    /// moved past the update thresholds. Returns whether it ran.
    pub fn process(&mut self, odom: &Pose2D, scan: &LaserScan) -> Result<bool, LocalizationError> {
        let Some(prev) = self.odom_ref else {
            self.odom_ref = Some(*odom);
            return Ok(false);
        };
        let moved = prev.distance(odom) >= self.params.update_min_d
            || wrap_angle(odom.theta - prev.theta).abs() >= self.params.update_min_a;
        if !moved {
            return Ok(false);
        }
        let delta = OdomDelta::between(&prev, odom);
        self.update(&delta, scan)?;
        self.odom_ref = Some(*odom);
        Ok(true)
    }

    pub fn estimate(&self) -> (Pose2D, Covariance) {
        (self.estimate, self.covariance)
    }

    /// Current map-frame pose: the last estimate carried forward by the
    /// odometry accumulated since that update.
    pub fn pose(&self, odom: &Pose2D) -> Pose2D {
        match self.odom_ref {
            Some(r) => self.estimate.compose(&r.between(odom)),
            None => self.estimate,
        }
    }
}
