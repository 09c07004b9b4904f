//! Grid raycasting for the simulated range sensor.

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2D;
use crate::grid::OccupancyGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    pub beams: usize,
    /// Field of view, radians, centered on the robot heading.
    pub fov: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
    pub mount_height: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self { beams: 360, fov: 270f64.to_radians(), max_range: 8.0, noise_sigma: 0.01, mount_height: 0.2 }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.beams == 0 || !(self.max_range > 0.0) || !(self.fov >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(format!("invalid lidar spec: {self:?}"));
        }
        Ok(())
    }

    pub fn angle_min(&self) -> f64 {
        if self.beams == 1 {
            0.0
        } else {
            -self.fov / 2.0
        }
    }

    pub fn angle_increment(&self) -> f64 {
        if self.beams == 1 {
            0.0
        } else {
            self.fov / (self.beams - 1) as f64
        }
    }
}

/// Distance along the ray from `(x, y)` in direction `angle` to the first
/// occupied cell, by walking the cells the ray crosses. `None` when nothing is
/// hit within `max_range` or the ray leaves the map.
pub fn raycast(map: &OccupancyGrid, x: f64, y: f64, angle: f64, max_range: f64) -> Option<f64> {
    let meta = &map.meta;
    let res = meta.resolution;
    let gx = (x - meta.origin.x) / res;
    let gy = (y - meta.origin.y) / res;
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut cx = gx.floor() as i64;
    let mut cy = gy.floor() as i64;
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        ((cx + 1) as f64 - gx) * t_delta_x
    } else if dx < 0.0 {
        (gx - cx as f64) * t_delta_x
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        ((cy + 1) as f64 - gy) * t_delta_y
    } else if dy < 0.0 {
        (gy - cy as f64) * t_delta_y
    } else {
        f64::INFINITY
    };
    let limit = max_range / res;
    let mut t = 0.0;
    loop {
        meta.signed_to_cell(cx, cy)?;
        if map.is_occupied_signed(cx, cy) {
            return Some(t * res);
        }
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            cx += step_x;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            cy += step_y;
        }
        if t > limit {
            return None;
        }
    }
}

/// Nearest non-negative intersection of a ray with a disc.
pub fn ray_disc(x: f64, y: f64, angle: f64, cx: f64, cy: f64, r: f64) -> Option<f64> {
    let (dx, dy) = (angle.cos(), angle.sin());
    let (fx, fy) = (x - cx, y - cy);
    let b = fx * dx + fy * dy;
    let c = fx * fx + fy * fy - r * r;
    if c <= 0.0 {
        return Some(0.0);
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Beam range against the map and a set of discs, or `None` for no return.
pub fn cast_beam(map: &OccupancyGrid, pose: &Pose2D, angle: f64, max_range: f64, discs: &[(f64, f64, f64)]) -> Option<f64> {
    let a = pose.theta + angle;
    let mut best = raycast(map, pose.x, pose.y, a, max_range);
    for &(cx, cy, r) in discs {
        if let Some(t) = ray_disc(pose.x, pose.y, a, cx, cy, r) {
            if t <= max_range && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }
    best.filter(|r| *r <= max_range)
}
