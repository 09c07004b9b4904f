//! Likelihood-field measurement model.

use serde::{Deserialize, Serialize};

use super::{normalize_weights, LocalizationError, Particle};
use crate::geometry::GridMeta;
use crate::grid::{bounded_sq_distance, Occupancy, OccupancyGrid};
use crate::sensor::LaserScan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub z_hit: f64,
    pub z_rand: f64,
    pub sigma_hit: f64,
    /// Distances are capped here, meters.
    pub max_dist: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self { z_hit: 0.9, z_rand: 0.1, sigma_hit: 0.15, max_dist: 2.0 }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), LocalizationError> {
        let ok = self.z_hit >= 0.0
            && self.z_rand >= 0.0
            && self.z_hit + self.z_rand <= 1.0 + 1e-12
            && self.sigma_hit > 0.0
            && self.max_dist > 0.0;
        if ok {
            Ok(())
        } else {
            Err(LocalizationError::InvalidParams(format!("sensor model out of range: {self:?}")))
        }
    }
}

/// Distance from every cell center to the nearest occupied cell center.
#[derive(Debug, Clone)]
pub struct LikelihoodField {
    pub meta: GridMeta,
    pub model: SensorModel,
    dist: Vec<f64>,
}

impl LikelihoodField {
    pub fn build(map: &OccupancyGrid, model: SensorModel) -> Result<Self, LocalizationError> {
        model.validate()?;
        let occ: Vec<bool> = map.cells.iter().map(|c| *c == Occupancy::Occupied).collect();
        if !occ.iter().any(|&b| b) {
            return Err(LocalizationError::EmptyMap);
        }
        let meta = map.meta;
        let radius = model.max_dist / meta.resolution + 1e-6;
        let dist = bounded_sq_distance(meta.width, meta.height, &occ, radius)
            .into_iter()
            .map(|d2| match d2 {
                Some(d2) => (meta.resolution * (d2 as f64).sqrt()).min(model.max_dist),
                None => model.max_dist,
            })
            .collect();
        Ok(Self { meta, model, dist })
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    /// Capped distance at a world point; points off the map read as the cap.
    #[inline]
    pub fn distance_at(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.meta.world_to_signed(x, y);
        match self.meta.signed_to_cell(cx, cy) {
            Some(c) => self.dist[self.meta.index(c)],
            None => self.model.max_dist,
        }
    }

    /// Mixture likelihood of one endpoint at field distance `d`.
    #[inline]
    pub fn beam_factor(&self, d: f64, range_max: f64) -> f64 {
        let m = &self.model;
        m.z_hit * (-d * d / (2.0 * m.sigma_hit * m.sigma_hit)).exp() + m.z_rand / range_max
    }
}

/// Indices of `count` evenly spaced beams out of `n`.
pub fn subsample_indices(n: usize, count: usize) -> Vec<usize> {
    if count == 0 || n == 0 {
        return Vec::new();
    }
    if count >= n {
        return (0..n).collect();
    }
    (0..count).map(|i| i * n / count).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MeasurementInfo {
    /// Weights could not be normalized and were reset to uniform.
    pub uniform_reset: bool,
    pub beams_used: usize,
}

/// Reweights particles by the scan and normalizes. Computed in log space so
/// long beam products cannot underflow.
pub fn measurement_update(
    particles: &mut [Particle],
    scan: &LaserScan,
    field: &LikelihoodField,
    subsample: usize,
) -> Result<MeasurementInfo, LocalizationError> {
    if scan.is_empty() {
        return Err(LocalizationError::EmptyScan);
    }
    if particles.is_empty() {
        return Err(LocalizationError::NoParticles);
    }
    let beams: Vec<(f64, f64)> = subsample_indices(scan.len(), subsample)
        .into_iter()
        .filter(|&i| !scan.no_return[i] && scan.ranges[i] < scan.max_range)
        .map(|i| (scan.beam_angle(i), scan.ranges[i]))
        .collect();
    let mut logw: Vec<f64> = Vec::with_capacity(particles.len());
    for p in particles.iter() {
        let mut l = p.weight.ln();
        for &(a, r) in &beams {
            let th = p.pose.theta + a;
            let d = field.distance_at(p.pose.x + r * th.cos(), p.pose.y + r * th.sin());
            l += field.beam_factor(d, scan.max_range).ln();
        }
        logw.push(l);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut info = MeasurementInfo { uniform_reset: false, beams_used: beams.len() };
    if !max.is_finite() {
        info.uniform_reset = true;
    } else {
        for (p, l) in particles.iter_mut().zip(&logw) {
            p.weight = (l - max).exp();
        }
    }
    if info.uniform_reset || !normalize_weights(particles) {
        info.uniform_reset = true;
        let w = 1.0 / particles.len() as f64;
        particles.iter_mut().for_each(|p| p.weight = w);
    }
    Ok(info)
}
