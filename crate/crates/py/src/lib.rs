//! Python bindings: poses, cost grids with inflation and A* planning, map
//! loading, behavior tree validation, and whole-scenario runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use navcore::app::{self, AppError, RunOptions, ScenarioConfig};
use navcore::bt::{parse_tree, ActionRegistry};
use navcore::costmap::{cost, inflate, CostSnapshot, InflationParams};
use navcore::geometry::{self, GridMeta};
use navcore::grid::{CostGrid as CoreCostGrid, Occupancy};
use navcore::planning::{astar_plan, PlannerParams};

fn app_err(e: AppError) -> PyErr {
    match e {
        AppError::Config(_) | AppError::MapParse(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Pose2D", module = "navcore_py", from_py_object)]
#[derive(Clone, Copy)]
struct PyPose2D {
    inner: geometry::Pose2D,
}

#[pymethods]
impl PyPose2D {
    #[new]
    #[pyo3(signature = (x=0.0, y=0.0, theta=0.0))]
    fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { inner: geometry::Pose2D::new(x, y, theta) }
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }

    #[getter]
    fn y(&self) -> f64 {
        self.inner.y
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    /// `self ∘ delta`, with `delta` expressed in this pose's frame.
    fn compose(&self, delta: &PyPose2D) -> Self {
        Self { inner: self.inner.compose(&delta.inner) }
    }

    fn inverse(&self) -> Self {
        Self { inner: self.inner.inverse() }
    }

    /// The relative pose taking `self` to `other`.
    fn between(&self, other: &PyPose2D) -> Self {
        Self { inner: self.inner.between(&other.inner) }
    }

    fn distance(&self, other: &PyPose2D) -> f64 {
        self.inner.distance(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!("Pose2D(x={}, y={}, theta={})", self.inner.x, self.inner.y, self.inner.theta)
    }
}

/// A grid of 8-bit costs: 0 free, 1..=252 scaled, 253 inscribed, 254 lethal,
/// 255 unknown. Row 0 is the bottom of the map.
#[pyclass(name = "CostGrid", module = "navcore_py")]
struct PyCostGrid {
    inner: CoreCostGrid,
}

#[pymethods]
impl PyCostGrid {
    #[new]
    #[pyo3(signature = (width, height, resolution, data=None, origin=(0.0, 0.0)))]
    fn new(width: usize, height: usize, resolution: f64, data: Option<Vec<u8>>, origin: (f64, f64)) -> PyResult<Self> {
        let meta = GridMeta::new(resolution, origin.0, origin.1, width, height).map_err(value_err)?;
        let mut inner = CoreCostGrid::new(meta, cost::FREE);
        if let Some(d) = data {
            if d.len() != width * height {
                return Err(PyValueError::new_err(format!("data has {} cells, expected {}", d.len(), width * height)));
            }
            inner.data = d;
        }
        Ok(Self { inner })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.meta.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.meta.height
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.inner.meta.resolution
    }

    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.data)
    }

    fn get(&self, cx: usize, cy: usize) -> PyResult<u8> {
        self.inner
            .get(geometry::CellIndex { cx, cy })
            .ok_or_else(|| PyValueError::new_err(format!("cell ({cx}, {cy}) outside the grid")))
    }

    fn set(&mut self, cx: usize, cy: usize, value: u8) -> PyResult<()> {
        let m = self.inner.meta;
        if cx >= m.width || cy >= m.height {
            return Err(PyValueError::new_err(format!("cell ({cx}, {cy}) outside the grid")));
        }
        self.inner.data[cy * m.width + cx] = value;
        Ok(())
    }

    /// Returns an inflated copy. Lethal cells act as sources.
    #[pyo3(signature = (inscribed_radius=0.3, inflation_radius=0.8, cost_scaling=3.0))]
    fn inflated(&self, inscribed_radius: f64, inflation_radius: f64, cost_scaling: f64) -> PyResult<Self> {
        let p = InflationParams { inscribed_radius, inflation_radius, cost_scaling };
        p.validate().map_err(PyValueError::new_err)?;
        let mut g = self.inner.clone();
        inflate(&mut g, &p);
        Ok(Self { inner: g })
    }

    /// A* between two world points. Returns `[(x, y, theta), ...]`.
    #[pyo3(signature = (start, goal, cost_weight=1.0))]
    fn plan(&self, start: (f64, f64), goal: (f64, f64), cost_weight: f64) -> PyResult<Vec<(f64, f64, f64)>> {
        let m = &self.inner.meta;
        let s = m.world_to_cell(start.0, start.1).map_err(value_err)?;
        let g = m.world_to_cell(goal.0, goal.1).map_err(value_err)?;
        let params = PlannerParams { cost_weight, ..Default::default() };
        let snapshot = CostSnapshot::new(self.inner.clone(), 0.0);
        let path = astar_plan(&snapshot, s, g, &params).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(path.poses.iter().map(|p| (p.x, p.y, p.theta)).collect())
    }
}

/// Loads a PGM + YAML map as a cost grid of free, lethal and unknown cells.
#[pyfunction]
fn load_map(pgm: PathBuf, yaml: PathBuf) -> PyResult<PyCostGrid> {
    let grid = app::load_map(&pgm, &yaml).map_err(app_err)?;
    let mut out = CoreCostGrid::new(grid.meta, cost::FREE);
    for (c, o) in out.data.iter_mut().zip(&grid.cells) {
        *c = match o {
            Occupancy::Free => cost::FREE,
            Occupancy::Occupied => cost::LETHAL,
            Occupancy::Unknown => cost::UNKNOWN,
        };
    }
    Ok(PyCostGrid { inner: out })
}

/// Parses a behavior tree and returns its node count.
#[pyfunction]
fn validate_bt(xml: &str) -> PyResult<usize> {
    parse_tree(xml, &ActionRegistry::navigation()).map(|t| t.node_count()).map_err(value_err)
}

/// Runs a scenario file. Returns `(report, csv)` where `report` is a dict.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None, max_sim_time=None))]
fn run_scenario<'py>(
    py: Python<'py>,
    scenario: PathBuf,
    seed: Option<u64>,
    max_sim_time: Option<f64>,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let cfg = ScenarioConfig::load(&scenario).map_err(app_err)?;
    let out = py
        .detach(|| app::run_scenario(&cfg, RunOptions { seed, max_sim_time, ..Default::default() }))
        .map_err(app_err)?;
    let report = py.import("json")?.call_method1("loads", (out.report_json(),))?;
    Ok((report, out.csv()))
}

#[pymodule]
fn navcore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPose2D>()?;
    m.add_class::<PyCostGrid>()?;
    m.add_function(wrap_pyfunction!(load_map, m)?)?;
    m.add_function(wrap_pyfunction!(validate_bt, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("CSV_HEADER", app::CSV_HEADER)?;
    Ok(())
}
