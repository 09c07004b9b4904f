//! Layered costmap: a static map, a decaying voxel obstacle layer, and
//! exponential inflation, combined by per-cell maximum.

pub mod inflation;
pub mod layered;
pub mod voxel;

use thiserror::Error;

use crate::geometry::CellIndex;

pub use inflation::{inflate, inflation_cost, inflation_layer, InflationParams};
pub use layered::{cost_at, ClearScope, CostSnapshot, CostmapParams, Layer, LayeredCostmap};
pub use voxel::{ObserveStats, TemporalVoxelStore, VoxelKey};

/// Cost byte values.
pub mod cost {
    pub const FREE: u8 = 0;
    /// Highest cost produced by exponential decay.
    pub const MAX_SCALED: u8 = 252;
    /// Robot center within the inscribed radius of an obstacle.
    pub const INSCRIBED: u8 = 253;
    pub const LETHAL: u8 = 254;
    pub const UNKNOWN: u8 = 255;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostmapError {
    #[error("map does not match costmap: {0}")]
    MetaMismatch(String),
    #[error("robot pose ({x:.3}, {y:.3}) is outside the map")]
    PoseOutOfMap { x: f64, y: f64 },
    #[error("cell {0:?} is outside the costmap")]
    OutOfBounds(CellIndex),
    #[error("invalid costmap parameters: {0}")]
    InvalidParams(String),
}
