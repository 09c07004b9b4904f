//! Static → voxel → inflation layer stack combined by per-cell maximum.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::inflation::{inflation_from_sources, InflationParams};
use super::voxel::TemporalVoxelStore;
use super::{cost, CostmapError};
use crate::geometry::{CellIndex, GridMeta, Pose2D};
use crate::grid::{CostGrid, Occupancy, OccupancyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClearScope {
    Global,
    Local,
    Both,
}

impl ClearScope {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "global" => Some(Self::Global),
            "local" => Some(Self::Local),
            "both" => Some(Self::Both),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::Local => "local",
            Self::Both => "both",
        }
    }

    pub fn includes_global(self) -> bool {
        matches!(self, Self::Global | Self::Both)
    }

    pub fn includes_local(self) -> bool {
        matches!(self, Self::Local | Self::Both)
    }
}

/// Configuration shared by the global and local costmaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostmapParams {
    /// Side length of the rolling window, meters.
    pub local_window: f64,
    pub inflation: InflationParams,
    pub voxel_size: f64,
    /// Seconds an observation persists.
    pub decay: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub global_update_hz: f64,
    pub local_update_hz: f64,
}

impl Default for CostmapParams {
    fn default() -> Self {
        Self {
            local_window: 4.0,
            inflation: InflationParams::default(),
            voxel_size: 0.05,
            decay: 2.0,
            z_min: 0.0,
            z_max: 1.5,
            global_update_hz: 1.0,
            local_update_hz: 10.0,
        }
    }
}

impl CostmapParams {
    pub fn validate(&self) -> Result<(), CostmapError> {
        self.inflation.validate().map_err(CostmapError::InvalidParams)?;
        if !(self.z_min < self.z_max) {
            return Err(CostmapError::InvalidParams(format!("z band [{}, {}] is empty", self.z_min, self.z_max)));
        }
        if !(self.local_window > 0.0 && self.voxel_size > 0.0 && self.decay > 0.0) {
            return Err(CostmapError::InvalidParams("window, voxel size and decay must be > 0".into()));
        }
        if !(self.global_update_hz > 0.0 && self.local_update_hz > 0.0) {
            return Err(CostmapError::InvalidParams("update rates must be > 0".into()));
        }
        Ok(())
    }
}

/// An immutable combined cost grid published by a costmap update.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSnapshot {
    pub grid: CostGrid,
    stamp: f64,
}

impl CostSnapshot {
    pub fn new(grid: CostGrid, stamp: f64) -> Self {
        Self { grid, stamp }
    }

    pub fn stamp(&self) -> f64 {
        self.stamp
    }

    pub fn meta(&self) -> &GridMeta {
        &self.grid.meta
    }

    pub fn cost_at(&self, cell: CellIndex) -> Result<u8, CostmapError> {
        self.grid.get(cell).ok_or(CostmapError::OutOfBounds(cell))
    }
}

pub fn cost_at(snapshot: &CostSnapshot, cell: CellIndex) -> Result<u8, CostmapError> {
    snapshot.cost_at(cell)
}

pub trait Layer {
    fn name(&self) -> &str;
    fn clearable(&self) -> bool;
    /// This layer's per-cell output after the last update.
    fn costs(&self) -> &[u8];
}

#[derive(Debug, Clone)]
pub struct StaticLayer {
    costs: Vec<u8>,
}

impl Layer for StaticLayer {
    fn name(&self) -> &str {
        "static"
    }
    fn clearable(&self) -> bool {
        false
    }
    fn costs(&self) -> &[u8] {
        &self.costs
    }
}

#[derive(Debug, Clone)]
pub struct VoxelLayer {
    pub store: TemporalVoxelStore,
    z_min: f64,
    z_max: f64,
    costs: Vec<u8>,
}

impl Layer for VoxelLayer {
    fn name(&self) -> &str {
        "voxel"
    }
    fn clearable(&self) -> bool {
        true
    }
    fn costs(&self) -> &[u8] {
        &self.costs
    }
}

impl VoxelLayer {
    /// Marks every column holding a live voxel inside the z band as lethal.
    fn project(&mut self, meta: &GridMeta) {
        self.costs.iter_mut().for_each(|c| *c = 0);
        for k in self.store.keys() {
            let [x, y, z] = self.store.center_of(k);
            if z < self.z_min || z > self.z_max {
                continue;
            }
            if let Ok(c) = meta.world_to_cell(x, y) {
                self.costs[meta.index(c)] = cost::LETHAL;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct InflationLayer {
    pub params: InflationParams,
    costs: Vec<u8>,
    /// Inflation of the static layer alone; valid while the window does not move.
    static_cache: Option<Vec<u8>>,
}

impl Layer for InflationLayer {
    fn name(&self) -> &str {
        "inflation"
    }
    fn clearable(&self) -> bool {
        true
    }
    fn costs(&self) -> &[u8] {
        &self.costs
    }
}

#[derive(Debug, Clone)]
pub struct LayeredCostmap {
    name: String,
    meta: GridMeta,
    rolling: bool,
    window: f64,
    map: Option<Arc<OccupancyGrid>>,
    static_layer: StaticLayer,
    voxel_layer: VoxelLayer,
    inflation_layer: InflationLayer,
    snapshot: Arc<CostSnapshot>,
}

impl LayeredCostmap {
    /// A non-rolling costmap covering `meta`.
    pub fn new_global(name: &str, meta: GridMeta, params: &CostmapParams) -> Result<Self, CostmapError> {
        Self::build(name, meta, false, 0.0, params)
    }

    /// A rolling square window of side `params.local_window` at `resolution`.
    pub fn new_rolling(name: &str, resolution: f64, params: &CostmapParams) -> Result<Self, CostmapError> {
        let n = (params.local_window / resolution).round().max(1.0) as usize;
        let meta = GridMeta::new(resolution, 0.0, 0.0, n, n).map_err(|e| CostmapError::InvalidParams(e.to_string()))?;
        Self::build(name, meta, true, params.local_window, params)
    }

    fn build(name: &str, meta: GridMeta, rolling: bool, window: f64, params: &CostmapParams) -> Result<Self, CostmapError> {
        params.validate()?;
        let n = meta.len();
        let mut cm = Self {
            name: name.to_string(),
            meta,
            rolling,
            window,
            map: None,
            static_layer: StaticLayer { costs: vec![0; n] },
            voxel_layer: VoxelLayer {
                store: TemporalVoxelStore::new(params.voxel_size, params.decay)?,
                z_min: params.z_min,
                z_max: params.z_max,
                costs: vec![0; n],
            },
            inflation_layer: InflationLayer { params: params.inflation, costs: vec![0; n], static_cache: None },
            snapshot: Arc::new(CostSnapshot::new(CostGrid::new(meta, 0), 0.0)),
        };
        cm.recombine(0.0);
        Ok(cm)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn meta(&self) -> &GridMeta {
        &self.meta
    }

    pub fn is_rolling(&self) -> bool {
        self.rolling
    }

    pub fn layers(&self) -> [&dyn Layer; 3] {
        [&self.static_layer, &self.voxel_layer, &self.inflation_layer]
    }

    pub fn voxels(&self) -> &TemporalVoxelStore {
        &self.voxel_layer.store
    }

    pub fn voxels_mut(&mut self) -> &mut TemporalVoxelStore {
        &mut self.voxel_layer.store
    }

    pub fn snapshot(&self) -> Arc<CostSnapshot> {
        Arc::clone(&self.snapshot)
    }

    /// Loads the static layer from a map: occupied → lethal, free → 0, unknown → 255.
    pub fn static_init(&mut self, map: Arc<OccupancyGrid>) -> Result<(), CostmapError> {
        let mm = &map.meta;
        let same_res = (mm.resolution - self.meta.resolution).abs() <= 1e-12 * mm.resolution;
        if !same_res {
            return Err(CostmapError::MetaMismatch(format!(
                "map resolution {} vs costmap resolution {}",
                mm.resolution, self.meta.resolution
            )));
        }
        if !self.rolling
            && (mm.width != self.meta.width
                || mm.height != self.meta.height
                || (mm.origin.x - self.meta.origin.x).abs() > 1e-9
                || (mm.origin.y - self.meta.origin.y).abs() > 1e-9)
        {
            return Err(CostmapError::MetaMismatch(format!(
                "map is {}x{} at ({}, {}), costmap is {}x{} at ({}, {})",
                mm.width, mm.height, mm.origin.x, mm.origin.y, self.meta.width, self.meta.height, self.meta.origin.x,
                self.meta.origin.y
            )));
        }
        self.map = Some(map);
        self.resample_static();
        let stamp = self.snapshot.stamp();
        self.recombine(stamp);
        Ok(())
    }

    /// Sets inflation parameters and re-inflates.
    pub fn inflate(&mut self, params: InflationParams) -> Result<(), CostmapError> {
        params.validate().map_err(CostmapError::InvalidParams)?;
        self.inflation_layer.params = params;
        self.inflation_layer.static_cache = None;
        let stamp = self.snapshot.stamp();
        self.recombine(stamp);
        Ok(())
    }

    fn resample_static(&mut self) {
        let Some(map) = self.map.clone() else {
            self.static_layer.costs.iter_mut().for_each(|c| *c = 0);
            return;
        };
        let mm = &map.meta;
        let off_x = ((self.meta.origin.x - mm.origin.x) / mm.resolution).round() as i64;
        let off_y = ((self.meta.origin.y - mm.origin.y) / mm.resolution).round() as i64;
        for cy in 0..self.meta.height {
            for cx in 0..self.meta.width {
                let occ = mm
                    .signed_to_cell(cx as i64 + off_x, cy as i64 + off_y)
                    .map(|c| map.cells[mm.index(c)])
                    .unwrap_or(Occupancy::Unknown);
                self.static_layer.costs[cy * self.meta.width + cx] = match occ {
                    Occupancy::Occupied => cost::LETHAL,
                    Occupancy::Free => cost::FREE,
                    Occupancy::Unknown => cost::UNKNOWN,
                };
            }
        }
        self.inflation_layer.static_cache = None;
    }

    /// Moves the rolling window so it is centered on `(x, y)`, snapped to the map grid.
    fn recenter(&mut self, x: f64, y: f64) {
        let res = self.meta.resolution;
        let (gx, gy) = self.map.as_ref().map(|m| (m.meta.origin.x, m.meta.origin.y)).unwrap_or((0.0, 0.0));
        let half = self.window / 2.0;
        let ox = gx + ((x - half - gx) / res).floor() * res;
        let oy = gy + ((y - half - gy) / res).floor() * res;
        if (ox - self.meta.origin.x).abs() > 1e-9 || (oy - self.meta.origin.y).abs() > 1e-9 {
            self.meta.origin.x = ox;
            self.meta.origin.y = oy;
            self.resample_static();
        }
    }

    /// Records sensor points (world frame, meters) at time `now`.
    pub fn observe(&mut self, points: &[[f64; 3]], now: f64) {
        self.voxel_layer.store.observe(points, now);
    }

    /// Runs one update cycle and publishes a new snapshot.
    pub fn update(&mut self, robot: &Pose2D, points: &[[f64; 3]], now: f64) -> Result<Arc<CostSnapshot>, CostmapError> {
        let in_map = match &self.map {
            Some(m) => m.meta.contains_point(robot.x, robot.y),
            None => true,
        };
        if !in_map {
            return Err(CostmapError::PoseOutOfMap { x: robot.x, y: robot.y });
        }
        if self.rolling {
            self.recenter(robot.x, robot.y);
        }
        self.observe(points, now);
        self.voxel_layer.store.decay(now);
        self.voxel_layer.project(&self.meta);
        self.recombine(now);
        Ok(self.snapshot())
    }

    /// Empties every clearable layer and republishes static + its inflation.
    pub fn clear_except_static(&mut self) {
        self.voxel_layer.store.clear();
        self.voxel_layer.costs.iter_mut().for_each(|c| *c = 0);
        let stamp = self.snapshot.stamp();
        self.recombine(stamp);
    }

    fn recombine(&mut self, now: f64) {
        let (w, h, res) = (self.meta.width, self.meta.height, self.meta.resolution);
        let p = self.inflation_layer.params;
        if self.inflation_layer.static_cache.is_none() {
            let lethal: Vec<bool> = self.static_layer.costs.iter().map(|&c| c == cost::LETHAL).collect();
            self.inflation_layer.static_cache = Some(inflation_from_sources(w, h, res, &lethal, &p));
        }
        let static_infl = self.inflation_layer.static_cache.as_ref().unwrap();
        // the nearest lethal cell of a union is the nearer of the two per-set
        // nearest cells, and cost falls with distance, so inflation of the union is
        // the per-cell max of the two inflations
        let voxel_only: Vec<bool> = self
            .voxel_layer
            .costs
            .iter()
            .zip(&self.static_layer.costs)
            .map(|(&v, &s)| v == cost::LETHAL && s != cost::LETHAL)
            .collect();
        let inflation = &mut self.inflation_layer.costs;
        inflation.copy_from_slice(static_infl);
        if voxel_only.iter().any(|&b| b) {
            let extra = inflation_from_sources(w, h, res, &voxel_only, &p);
            for (c, e) in inflation.iter_mut().zip(extra) {
                *c = (*c).max(e);
            }
        }
        let data: Vec<u8> = self
            .static_layer
            .costs
            .iter()
            .zip(&self.voxel_layer.costs)
            .zip(inflation.iter())
            .map(|((&s, &v), &i)| s.max(v).max(i))
            .collect();
        self.snapshot = Arc::new(CostSnapshot::new(CostGrid { meta: self.meta, data }, now));
    }
}
