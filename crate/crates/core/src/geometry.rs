//! Poses, twists and grid indexing shared by every part of the stack.
//!
//! Angles are kept in `(-π, π]`. Grids use the corner of cell `(0, 0)` as
//! their origin and map world points to cells with `floor`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point ({x}, {y}) is outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("cell ({cx}, {cy}) is outside the grid")]
    CellOutOfBounds { cx: usize, cy: usize },
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> Result<f64, GeometryError> {
    if !theta.is_finite() {
        return Err(GeometryError::InvalidInput(format!("non-finite angle {theta}")));
    }
    Ok(wrap_angle(theta))
}

/// Infallible variant of [`normalize_angle`] for values already known to be finite.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = theta.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    // rem_euclid may round up to exactly 2π for tiny negative inputs
    if r <= -PI {
        r += two_pi;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Applies `delta`, expressed in this pose's frame.
    pub fn compose(&self, delta: &Pose2D) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(
            self.x + c * delta.x - s * delta.y,
            self.y + s * delta.x + c * delta.y,
            self.theta + delta.theta,
        )
    }

    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)
    }

    /// Pose of `other` expressed in this pose's frame.
    pub fn between(&self, other: &Pose2D) -> Pose2D {
        self.inverse().compose(other)
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub fn compose(base: &Pose2D, delta: &Pose2D) -> Pose2D {
    base.compose(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    /// forward velocity, m/s
    pub vx: f64,
    /// yaw rate, rad/s
    pub wz: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { vx: 0.0, wz: 0.0 };

    pub fn new(vx: f64, wz: f64) -> Self {
        Self { vx, wz }
    }
}

/// Integrates a constant twist for `dt` seconds with the exact unicycle model
/// (straight line when the yaw rate is negligible, circular arc otherwise).
pub fn integrate_twist(pose: &Pose2D, twist: &Twist, dt: f64) -> Pose2D {
    let Twist { vx, wz } = *twist;
    if wz.abs() < 1e-9 {
        let (s, c) = pose.theta.sin_cos();
        Pose2D::new(pose.x + vx * dt * c, pose.y + vx * dt * s, pose.theta + wz * dt)
    } else {
        let th1 = pose.theta + wz * dt;
        let r = vx / wz;
        Pose2D::new(
            pose.x + r * (th1.sin() - pose.theta.sin()),
            pose.y - r * (th1.cos() - pose.theta.cos()),
            th1,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub cx: usize,
    pub cy: usize,
}

impl CellIndex {
    pub const fn new(cx: usize, cy: usize) -> Self {
        Self { cx, cy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub resolution: f64,
    /// World pose of the outer corner of cell (0, 0). Heading is always zero.
    pub origin: Pose2D,
    pub width: usize,
    pub height: usize,
}

impl GridMeta {
    pub fn new(resolution: f64, origin_x: f64, origin_y: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GeometryError::InvalidInput(format!("resolution must be > 0, got {resolution}")));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidInput(format!("grid must be non-empty, got {width}x{height}")));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(GeometryError::InvalidInput("non-finite origin".into()));
        }
        Ok(Self { resolution, origin: Pose2D { x: origin_x, y: origin_y, theta: 0.0 }, width, height })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, cell: CellIndex) -> usize {
        cell.cy * self.width + cell.cx
    }

    #[inline]
    pub fn cell_of(&self, index: usize) -> CellIndex {
        CellIndex::new(index % self.width, index / self.width)
    }

    pub fn contains_cell(&self, cell: CellIndex) -> bool {
        cell.cx < self.width && cell.cy < self.height
    }

    /// Signed cell coordinates of a world point, without bounds checks.
    #[inline]
    pub fn world_to_signed(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin.x) / self.resolution).floor() as i64,
            ((y - self.origin.y) / self.resolution).floor() as i64,
        )
    }

    #[inline]
    pub fn signed_to_cell(&self, cx: i64, cy: i64) -> Option<CellIndex> {
        if cx >= 0 && cy >= 0 && (cx as usize) < self.width && (cy as usize) < self.height {
            Some(CellIndex::new(cx as usize, cy as usize))
        } else {
            None
        }
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Result<CellIndex, GeometryError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(GeometryError::OutOfBounds { x, y });
        }
        let (cx, cy) = self.world_to_signed(x, y);
        self.signed_to_cell(cx, cy).ok_or(GeometryError::OutOfBounds { x, y })
    }

    /// Center of `cell` in world coordinates.
    pub fn cell_to_world(&self, cell: CellIndex) -> Result<(f64, f64), GeometryError> {
        if !self.contains_cell(cell) {
            return Err(GeometryError::CellOutOfBounds { cx: cell.cx, cy: cell.cy });
        }
        Ok(self.cell_center(cell))
    }

    #[inline]
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        (
            self.origin.x + (cell.cx as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.cy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn world_width(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn world_height(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.world_to_cell(x, y).is_ok()
    }
}

pub fn world_to_cell(meta: &GridMeta, x: f64, y: f64) -> Result<CellIndex, GeometryError> {
    meta.world_to_cell(x, y)
}

pub fn cell_to_world(meta: &GridMeta, cell: CellIndex) -> Result<(f64, f64), GeometryError> {
    meta.cell_to_world(cell)
}

/// Circular robot footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub radius: f64,
}

impl Footprint {
    pub fn circle(radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::InvalidInput(format!("footprint radius must be > 0, got {radius}")));
        }
        Ok(Self { radius })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootprintCells {
    pub cells: Vec<CellIndex>,
    /// Set when part of the footprint falls outside the grid.
    pub truncated: bool,
}

/// Cells whose centers lie within the footprint radius of the pose, in row-major order.
pub fn footprint_cells(fp: &Footprint, pose: &Pose2D, meta: &GridMeta) -> FootprintCells {
    let res = meta.resolution;
    let r2 = fp.radius * fp.radius;
    let lo_x = ((pose.x - fp.radius - meta.origin.x) / res).floor() as i64 - 1;
    let hi_x = ((pose.x + fp.radius - meta.origin.x) / res).ceil() as i64 + 1;
    let lo_y = ((pose.y - fp.radius - meta.origin.y) / res).floor() as i64 - 1;
    let hi_y = ((pose.y + fp.radius - meta.origin.y) / res).ceil() as i64 + 1;
    let mut cells = Vec::new();
    let mut truncated = false;
    for cy in lo_y..=hi_y {
        let wy = meta.origin.y + (cy as f64 + 0.5) * res;
        for cx in lo_x..=hi_x {
            let wx = meta.origin.x + (cx as f64 + 0.5) * res;
            let (dx, dy) = (wx - pose.x, wy - pose.y);
            if dx * dx + dy * dy <= r2 {
                match meta.signed_to_cell(cx, cy) {
                    Some(c) => cells.push(c),
                    None => truncated = true,
                }
            }
        }
    }
    FootprintCells { cells, truncated }
}
