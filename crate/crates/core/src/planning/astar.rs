//! 8-connected A* over a cost snapshot.
//!
//! Path costs are sums of `step · (1 + w · c / 252)` with steps of 1 or √2.
//! They are accumulated exactly as `(a + b·√2) / SCALE` with integer `a`, `b`
//! so that equal-cost alternatives compare equal and the search result does
//! not depend on floating-point summation order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Path, PlanError, PlannerParams};
use crate::costmap::{cost, CostSnapshot};
use crate::geometry::{CellIndex, Pose2D};

/// Denominator of the exact cost representation: 252 cost levels times
/// 64 steps of cost weight.
pub const SCALE: u64 = 252 * 64;

/// Neighbor order, +y is north.
pub const NEIGHBORS: [(i64, i64); 8] = [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)];

/// A path cost `(a + b·√2) / SCALE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ExactCost {
    pub a: u64,
    pub b: u64,
}

impl ExactCost {
    pub const ZERO: ExactCost = ExactCost { a: 0, b: 0 };

    pub fn to_f64(self) -> f64 {
        (self.a as f64 + self.b as f64 * std::f64::consts::SQRT_2) / SCALE as f64
    }

    fn add(self, o: ExactCost) -> ExactCost {
        ExactCost { a: self.a + o.a, b: self.b + o.b }
    }
}

impl Ord for ExactCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // sign of (a1 - a2) + (b1 - b2)·√2, decided without irrationals
        let da = self.a as i128 - other.a as i128;
        let db = self.b as i128 - other.b as i128;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (x, y) if x >= 0 && y >= 0 => Ordering::Greater,
            (x, y) if x <= 0 && y <= 0 => Ordering::Less,
            (1, _) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for ExactCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost weight in 1/64 units.
pub fn quantized_weight(cost_weight: f64) -> u64 {
    (cost_weight * 64.0).round().max(0.0) as u64
}

/// Cost of one move into a cell of cost `c`.
#[inline]
pub fn step_cost(diagonal: bool, c: u8, weight_q: u64) -> ExactCost {
    let base = SCALE + weight_q * c as u64;
    if diagonal {
        ExactCost { a: 0, b: base }
    } else {
        ExactCost { a: base, b: 0 }
    }
}

/// Octile distance in cells, as an exact cost.
#[inline]
pub fn octile(dx: u64, dy: u64) -> ExactCost {
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    ExactCost { a: (hi - lo) * SCALE, b: lo * SCALE }
}

pub fn traversable(c: u8) -> bool {
    c < cost::INSCRIBED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Entry {
    f: ExactCost,
    h: ExactCost,
    seq: u64,
    idx: u32,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other.f.cmp(&self.f).then_with(|| other.h.cmp(&self.h)).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Search state reused across plans so large maps are not reallocated per request.
#[derive(Debug, Default)]
pub struct AstarPlanner {
    g: Vec<ExactCost>,
    parent: Vec<u32>,
    seen: Vec<u32>,
    closed: Vec<u32>,
    generation: u32,
    heap: BinaryHeap<Entry>,
    /// Cells expanded by the most recent search.
    pub expanded: usize,
}

impl AstarPlanner {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, n: usize) {
        if self.g.len() != n {
            self.g = vec![ExactCost::ZERO; n];
            self.parent = vec![u32::MAX; n];
            self.seen = vec![0; n];
            self.closed = vec![0; n];
            self.generation = 0;
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.closed.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.heap.clear();
        self.expanded = 0;
    }

    pub fn plan(
        &mut self,
        snapshot: &CostSnapshot,
        start: CellIndex,
        goal: CellIndex,
        params: &PlannerParams,
    ) -> Result<Path, PlanError> {
        let grid = &snapshot.grid;
        let meta = grid.meta;
        let goal_cost = grid.get(goal).ok_or(PlanError::OutOfMap)?;
        let start_cost = grid.get(start).ok_or(PlanError::OutOfMap)?;
        if !traversable(goal_cost) {
            return Err(PlanError::GoalOccupied);
        }
        if !traversable(start_cost) {
            return Err(PlanError::StartOccupied);
        }
        let wq = quantized_weight(params.cost_weight);
        let (w, h) = (meta.width as i64, meta.height as i64);
        let n = meta.len();
        self.prepare(n);
        let gen = self.generation;
        let si = meta.index(start);
        let gi = meta.index(goal);
        let heuristic = |idx: usize| {
            let (x, y) = ((idx % meta.width) as i64, (idx / meta.width) as i64);
            octile((x - goal.cx as i64).unsigned_abs(), (y - goal.cy as i64).unsigned_abs())
        };

        self.g[si] = ExactCost::ZERO;
        self.parent[si] = u32::MAX;
        self.seen[si] = gen;
        let mut seq = 0u64;
        let h0 = heuristic(si);
        self.heap.push(Entry { f: h0, h: h0, seq, idx: si as u32 });

        let mut reached = false;
        while let Some(e) = self.heap.pop() {
            let idx = e.idx as usize;
            if self.closed[idx] == gen {
                continue;
            }
            self.closed[idx] = gen;
            self.expanded += 1;
            if idx == gi {
                reached = true;
                break;
            }
            let g_here = self.g[idx];
            let (x, y) = ((idx % meta.width) as i64, (idx / meta.width) as i64);
            for (k, (dx, dy)) in NEIGHBORS.iter().enumerate() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let ni = (ny * w + nx) as usize;
                if self.closed[ni] == gen {
                    continue;
                }
                let c = grid.data[ni];
                if !traversable(c) {
                    continue;
                }
                let g_new = g_here.add(step_cost(k % 2 == 1, c, wq));
                if self.seen[ni] == gen && self.g[ni] <= g_new {
                    continue;
                }
                self.seen[ni] = gen;
                self.g[ni] = g_new;
                self.parent[ni] = idx as u32;
                let hn = heuristic(ni);
                seq += 1;
                self.heap.push(Entry { f: g_new.add(hn), h: hn, seq, idx: ni as u32 });
            }
        }
        if !reached {
            return Err(PlanError::NoPathFound);
        }

        let mut cells = vec![gi];
        let mut cur = gi;
        while cur != si {
            cur = self.parent[cur] as usize;
            cells.push(cur);
        }
        cells.reverse();
        let centers: Vec<(f64, f64)> = cells.iter().map(|&i| meta.cell_center(meta.cell_of(i))).collect();
        let mut poses = Vec::with_capacity(centers.len());
        for i in 0..centers.len() {
            let (x, y) = centers[i];
            let theta = if i + 1 < centers.len() {
                let (nx, ny) = centers[i + 1];
                (ny - y).atan2(nx - x)
            } else if i > 0 {
                let (px, py) = centers[i - 1];
                (y - py).atan2(x - px)
            } else {
                0.0
            };
            poses.push(Pose2D::new(x, y, theta));
        }
        let exact = self.g[gi];
        Ok(Path { poses, cost: exact.to_f64(), exact_cost: exact, stamp: snapshot.stamp() })
    }
}

/// One-shot convenience wrapper around [`AstarPlanner::plan`].
pub fn astar_plan(
    snapshot: &CostSnapshot,
    start: CellIndex,
    goal: CellIndex,
    params: &PlannerParams,
) -> Result<Path, PlanError> {
    AstarPlanner::new().plan(snapshot, start, goal, params)
}
