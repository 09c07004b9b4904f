use serde::{Deserialize, Serialize};

use super::cost;
use crate::grid::{bounded_sq_distance, CostGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InflationParams {
    /// meters
    pub inscribed_radius: f64,
    /// meters
    pub inflation_radius: f64,
    /// 1/m
    pub cost_scaling: f64,
}

impl Default for InflationParams {
    fn default() -> Self {
        Self { inscribed_radius: 0.3, inflation_radius: 0.8, cost_scaling: 3.0 }
    }
}

impl InflationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.inscribed_radius >= 0.0) || !(self.inflation_radius >= self.inscribed_radius) {
            return Err(format!(
                "need 0 <= inscribed_radius ({}) <= inflation_radius ({})",
                self.inscribed_radius, self.inflation_radius
            ));
        }
        if !(self.cost_scaling >= 0.0) {
            return Err(format!("cost_scaling must be >= 0, got {}", self.cost_scaling));
        }
        Ok(())
    }
}

/// Cost written at distance `d` (meters, between cell centers) from the
/// nearest lethal cell, or `None` beyond the inflation radius.
#[inline]
pub fn inflation_cost(d: f64, p: &InflationParams) -> Option<u8> {
    if d > p.inflation_radius {
        None
    } else if d == 0.0 {
        Some(cost::LETHAL)
    } else if d <= p.inscribed_radius {
        Some(cost::INSCRIBED)
    } else {
        Some((cost::MAX_SCALED as f64 * (-p.cost_scaling * (d - p.inscribed_radius)).exp()).floor() as u8)
    }
}

/// Inflation layer output for a grid: the cost each cell receives from its
/// nearest lethal cell, 0 where nothing reaches.
pub fn inflation_layer(grid: &CostGrid, p: &InflationParams) -> Vec<u8> {
    let is_lethal: Vec<bool> = grid.data.iter().map(|&c| c == cost::LETHAL).collect();
    inflation_from_sources(grid.meta.width, grid.meta.height, grid.meta.resolution, &is_lethal, p)
}

pub(crate) fn inflation_from_sources(
    width: usize,
    height: usize,
    resolution: f64,
    is_lethal: &[bool],
    p: &InflationParams,
) -> Vec<u8> {
    // slightly oversized search radius; the exact cut is applied below
    let radius_cells = p.inflation_radius / resolution + 1e-6;
    bounded_sq_distance(width, height, is_lethal, radius_cells)
        .into_iter()
        .map(|d2| match d2 {
            Some(d2) => inflation_cost(resolution * (d2 as f64).sqrt(), p).unwrap_or(0),
            None => 0,
        })
        .collect()
}

/// Inflates lethal cells of `grid` in place; existing costs are never lowered.
pub fn inflate(grid: &mut CostGrid, p: &InflationParams) {
    let layer = inflation_layer(grid, p);
    for (c, l) in grid.data.iter_mut().zip(layer) {
        *c = (*c).max(l);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CellIndex, GridMeta};

    #[test]
    fn formula_value() {
        let p = InflationParams { inscribed_radius: 0.2, inflation_radius: 2.0, cost_scaling: 1.0 };
        assert_eq!(inflation_cost(0.8931, &p), Some(126));
        assert_eq!(inflation_cost(0.15, &p), Some(253));
        assert_eq!(inflation_cost(0.0, &p), Some(254));
        assert_eq!(inflation_cost(2.01, &p), None);
    }

    #[test]
    fn no_lethal_writes_nothing() {
        let meta = GridMeta::new(0.1, 0.0, 0.0, 10, 10).unwrap();
        let mut g = CostGrid::new(meta, 0);
        g.data[5] = 100;
        let before = g.clone();
        inflate(&mut g, &InflationParams::default());
        assert_eq!(g, before);
    }

    #[test]
    fn never_lowers() {
        let meta = GridMeta::new(0.1, 0.0, 0.0, 10, 10).unwrap();
        let mut g = CostGrid::new(meta, 0);
        g.data[meta.index(CellIndex::new(0, 0))] = cost::LETHAL;
        g.data[meta.index(CellIndex::new(9, 9))] = cost::UNKNOWN;
        g.data[meta.index(CellIndex::new(2, 0))] = 252;
        inflate(&mut g, &InflationParams::default());
        assert_eq!(g.get(CellIndex::new(9, 9)), Some(cost::UNKNOWN));
        assert_eq!(g.get(CellIndex::new(2, 0)), Some(253));
        assert_eq!(g.get(CellIndex::new(1, 0)), Some(253));
    }
}
