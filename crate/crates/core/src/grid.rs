//! Occupancy and cost rasters plus the bounded distance transform used by
//! inflation and the likelihood field.

use serde::{Deserialize, Serialize};

use crate::geometry::{CellIndex, GeometryError, GridMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Occupancy {
    Free,
    Occupied,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub meta: GridMeta,
    pub cells: Vec<Occupancy>,
}

impl OccupancyGrid {
    pub fn new_filled(meta: GridMeta, value: Occupancy) -> Self {
        Self { meta, cells: vec![value; meta.len()] }
    }

    pub fn from_cells(meta: GridMeta, cells: Vec<Occupancy>) -> Result<Self, GeometryError> {
        if cells.len() != meta.len() {
            return Err(GeometryError::InvalidInput(format!(
                "expected {} cells, got {}",
                meta.len(),
                cells.len()
            )));
        }
        Ok(Self { meta, cells })
    }

    pub fn get(&self, cell: CellIndex) -> Option<Occupancy> {
        self.meta.contains_cell(cell).then(|| self.cells[self.meta.index(cell)])
    }

    pub fn set(&mut self, cell: CellIndex, value: Occupancy) {
        let i = self.meta.index(cell);
        self.cells[i] = value;
    }

    /// Occupancy at a world point; points off the map read as unknown.
    pub fn at_world(&self, x: f64, y: f64) -> Occupancy {
        match self.meta.world_to_cell(x, y) {
            Ok(c) => self.cells[self.meta.index(c)],
            Err(_) => Occupancy::Unknown,
        }
    }

    pub fn is_occupied_signed(&self, cx: i64, cy: i64) -> bool {
        self.meta
            .signed_to_cell(cx, cy)
            .map(|c| self.cells[self.meta.index(c)] == Occupancy::Occupied)
            .unwrap_or(false)
    }

    /// Marks every cell whose center lies inside the axis-aligned world rectangle.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, value: Occupancy) {
        let (lx, hx) = (x0.min(x1), x0.max(x1));
        let (ly, hy) = (y0.min(y1), y0.max(y1));
        for cy in 0..self.meta.height {
            for cx in 0..self.meta.width {
                let (wx, wy) = self.meta.cell_center(CellIndex::new(cx, cy));
                if wx >= lx && wx <= hx && wy >= ly && wy <= hy {
                    let i = self.meta.index(CellIndex::new(cx, cy));
                    self.cells[i] = value;
                }
            }
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Occupancy::Occupied).count()
    }
}

/// A raster of cost bytes (see [`crate::costmap::cost`] for the value semantics).
#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    pub meta: GridMeta,
    pub data: Vec<u8>,
}

impl CostGrid {
    pub fn new(meta: GridMeta, fill: u8) -> Self {
        Self { meta, data: vec![fill; meta.len()] }
    }

    #[inline]
    pub fn get(&self, cell: CellIndex) -> Option<u8> {
        self.meta.contains_cell(cell).then(|| self.data[self.meta.index(cell)])
    }

    #[inline]
    pub fn get_signed(&self, cx: i64, cy: i64) -> Option<u8> {
        self.meta.signed_to_cell(cx, cy).map(|c| self.data[self.meta.index(c)])
    }

    /// Cost of the cell containing a world point, `None` off-grid.
    #[inline]
    pub fn at_world(&self, x: f64, y: f64) -> Option<u8> {
        let (cx, cy) = self.meta.world_to_signed(x, y);
        self.get_signed(cx, cy)
    }
}

/// Squared distance, in cells, from every cell to the nearest source cell,
/// limited to `radius_cells`. Cells farther than the radius get `None`.
///
/// Only sources with at least one non-source 4-neighbour are stamped: the
/// nearest source to any non-source cell always has that property, and
/// source cells themselves are at distance zero.
pub fn bounded_sq_distance(width: usize, height: usize, is_source: &[bool], radius_cells: f64) -> Vec<Option<u32>> {
    assert_eq!(is_source.len(), width * height);
    let mut out = vec![None; width * height];
    let r = radius_cells.max(0.0);
    let r_int = r.floor() as i64;
    let r2 = r * r;
    let kernel: Vec<(i64, i64, u32)> = (-r_int..=r_int)
        .flat_map(|dy| (-r_int..=r_int).map(move |dx| (dx, dy)))
        .filter_map(|(dx, dy)| {
            let d2 = (dx * dx + dy * dy) as u32;
            ((d2 as f64) <= r2).then_some((dx, dy, d2))
        })
        .collect();
    let (w, h) = (width as i64, height as i64);
    for sy in 0..h {
        for sx in 0..w {
            let si = (sy * w + sx) as usize;
            if !is_source[si] {
                continue;
            }
            out[si] = Some(0);
            let boundary = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| {
                let (nx, ny) = (sx + dx, sy + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && !is_source[(ny * w + nx) as usize]
            });
            if !boundary {
                continue;
            }
            for &(dx, dy, d2) in &kernel {
                let (x, y) = (sx + dx, sy + dy);
                if x < 0 || y < 0 || x >= w || y >= h {
                    continue;
                }
                let slot = &mut out[(y * w + x) as usize];
                match slot {
                    Some(cur) if *cur <= d2 => {}
                    _ => *slot = Some(d2),
                }
            }
        }
    }
    out
}
