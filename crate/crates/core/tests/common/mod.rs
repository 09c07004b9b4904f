//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod bt_model;
pub mod lifecycle_model;
pub mod mcl;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use navcore::app::ScenarioConfig;
use navcore::bt::{ActionBackend, ActionSpec, ActionState, Blackboard, NodeStatus, RequestId};
use navcore::control::dwb::DwbController;
use navcore::control::{ControllerParams, CriticWeights, Trajectory};
use navcore::costmap::{inflate, CostSnapshot, InflationParams, TemporalVoxelStore};
use navcore::geometry::{wrap_angle, CellIndex, GridMeta, Pose2D, Twist};
use navcore::planning::astar::quantized_weight;
use navcore::planning::{astar_plan, PlannerParams};
use navcore::grid::CostGrid;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scenario(name: &str) -> ScenarioConfig {
    let path = repo_root().join("scenarios").join(format!("{name}.toml"));
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Random costs: mostly free, some scaled, some inscribed/lethal, a little unknown.
pub fn random_cost_grid<R: Rng>(rng: &mut R, w: usize, h: usize, res: f64) -> CostGrid {
    let meta = GridMeta::new(res, 0.0, 0.0, w, h).unwrap();
    let mut g = CostGrid::new(meta, 0);
    for c in g.data.iter_mut() {
        let r: f64 = rng.random();
        *c = if r < 0.5 {
            0
        } else if r < 0.78 {
            rng.random_range(1..=252)
        } else if r < 0.83 {
            253
        } else if r < 0.95 {
            254
        } else {
            255
        };
    }
    g
}

/// Grid with lethal cells at the given density and zeros elsewhere.
pub fn random_lethal_grid<R: Rng>(rng: &mut R, w: usize, h: usize, res: f64, density: f64) -> CostGrid {
    let meta = GridMeta::new(res, 0.0, 0.0, w, h).unwrap();
    let mut g = CostGrid::new(meta, 0);
    for c in g.data.iter_mut() {
        if rng.random::<f64>() < density {
            *c = 254;
        } else if rng.random::<f64>() < 0.05 {
            *c = 255;
        } else if rng.random::<f64>() < 0.1 {
            *c = rng.random_range(1..=252);
        }
    }
    g
}

/// Nearest-lethal distance by scanning every pair of cells, then the cost formula.
/// The result is the combined grid: the larger of the input and the inflation.
pub fn brute_force_inflation(g: &CostGrid, inscribed: f64, radius: f64, k: f64) -> Vec<u8> {
    let (w, h) = (g.meta.width as i64, g.meta.height as i64);
    let lethal: Vec<(i64, i64)> =
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| g.data[(y * w + x) as usize] == 254).collect();
    let mut out = g.data.clone();
    for y in 0..h {
        for x in 0..w {
            let best = lethal.iter().map(|&(lx, ly)| ((lx - x).pow(2) + (ly - y).pow(2)) as u32).min();
            let Some(d2) = best else { continue };
            let d = g.meta.resolution * (d2 as f64).sqrt();
            let c = if d2 == 0 {
                254
            } else if d <= inscribed {
                253
            } else if d > radius {
                0
            } else {
                (252.0 * (-k * (d - inscribed)).exp()).floor() as u8
            };
            let slot = &mut out[(y * w + x) as usize];
            *slot = (*slot).max(c);
        }
    }
    out
}

/// `a + b·√2` compared exactly.
pub fn cmp_surd(x: (u64, u64), y: (u64, u64)) -> Ordering {
    let da = x.0 as i128 - y.0 as i128;
    let db = x.1 as i128 - y.1 as i128;
    // sign of da + db·√2
    let sign = |v: i128| v.signum();
    match (sign(da), sign(db)) {
        (0, 0) => Ordering::Equal,
        (a, b) if a >= 0 && b >= 0 => Ordering::Greater,
        (a, b) if a <= 0 && b <= 0 => Ordering::Less,
        (1, -1) => (da * da).cmp(&(2 * db * db)),
        _ => (2 * db * db).cmp(&(da * da)),
    }
}

#[derive(PartialEq, Eq)]
struct QItem {
    cost: (u64, u64),
    idx: usize,
}

impl Ord for QItem {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_surd(other.cost, self.cost).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for QItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Plain Dijkstra on the 8-connected grid. Entering a cell of cost `c` costs
/// `(SCALE + wq·c)` times 1 or √2; cells with cost >= 253 are walls.
/// Returns `(a, b)` of the optimal `a + b·√2`, or `None` when unreachable.
pub fn dijkstra_cost(g: &CostGrid, start: (usize, usize), goal: (usize, usize), wq: u64) -> Option<(u64, u64)> {
    const SCALE: u64 = 252 * 64;
    let (w, h) = (g.meta.width, g.meta.height);
    let passable = |i: usize| g.data[i] < 253;
    let si = start.1 * w + start.0;
    let gi = goal.1 * w + goal.0;
    if !passable(si) || !passable(gi) {
        return None;
    }
    let mut dist: Vec<Option<(u64, u64)>> = vec![None; w * h];
    let mut done = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    dist[si] = Some((0, 0));
    heap.push(QItem { cost: (0, 0), idx: si });
    while let Some(QItem { cost, idx }) = heap.pop() {
        if done[idx] {
            continue;
        }
        done[idx] = true;
        if idx == gi {
            return Some(cost);
        }
        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let ni = ny as usize * w + nx as usize;
                if done[ni] || !passable(ni) {
                    continue;
                }
                let step = SCALE + wq * g.data[ni] as u64;
                let next = if dx != 0 && dy != 0 { (cost.0, cost.1 + step) } else { (cost.0 + step, cost.1) };
                if dist[ni].is_none_or(|d| cmp_surd(next, d) == Ordering::Less) {
                    dist[ni] = Some(next);
                    heap.push(QItem { cost: next, idx: ni });
                }
            }
        }
    }
    None
}

/// Cost under a pose as the controller sees it: unknown is free, outside the
/// window is lethal.
pub fn seen_cost(s: &CostSnapshot, p: &Pose2D) -> u8 {
    let m = &s.grid.meta;
    let fx = ((p.x - m.origin.x) / m.resolution).floor();
    let fy = ((p.y - m.origin.y) / m.resolution).floor();
    if fx < 0.0 || fy < 0.0 || fx >= m.width as f64 || fy >= m.height as f64 {
        return 254;
    }
    match s.grid.data[fy as usize * m.width + fx as usize] {
        255 => 0,
        c => c,
    }
}

/// Critic sum for one trajectory, or `None` if any pose sits on cost >= 253.
pub fn oracle_score(
    t: &Trajectory,
    s: &CostSnapshot,
    path: &[Pose2D],
    target: &Pose2D,
    w: &CriticWeights,
    vx_max: f64,
) -> Option<f64> {
    let mut worst = 0u8;
    let mut path_sum = 0.0;
    for p in &t.poses {
        let c = seen_cost(s, p);
        if c >= 253 {
            return None;
        }
        worst = worst.max(c);
        let nearest = path.iter().map(|q| (p.x - q.x).powi(2) + (p.y - q.y).powi(2)).fold(f64::INFINITY, f64::min);
        path_sum += nearest.sqrt();
    }
    let end = *t.poses.last()?;
    let gd = (end.x - target.x).hypot(end.y - target.y);
    let heading = if gd > 1e-9 {
        wrap_angle((target.y - end.y).atan2(target.x - end.x) - end.theta).abs() / std::f64::consts::PI
    } else {
        0.0
    };
    Some(
        w.obstacle * (worst as f64 / 252.0)
            + w.path * (path_sum / t.poses.len() as f64)
            + w.goal * gd
            + w.speed * (1.0 - t.twist.vx / vx_max)
            + w.heading * heading,
    )
}

/// Exhaustive argmin with the documented tie-break: lower score, then higher
/// vx, then smaller |wz|, then lower index.
pub fn oracle_argmin(scores: &[Option<f64>], twists: &[Twist]) -> Option<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_some()).collect();
    idx.sort_by(|&i, &j| {
        scores[i]
            .unwrap()
            .partial_cmp(&scores[j].unwrap())
            .unwrap()
            .then(twists[j].vx.partial_cmp(&twists[i].vx).unwrap())
            .then(twists[i].wz.abs().partial_cmp(&twists[j].wz.abs()).unwrap())
            .then(i.cmp(&j))
    });
    idx.first().copied()
}

/// True if re-rolling `twist` from `pose` crosses cost >= 253 (unknown
/// included) or leaves the snapshot.
pub fn resim_unsafe(s: &CostSnapshot, pose: &Pose2D, twist: Twist, sim_time: f64, sim_dt: f64) -> bool {
    let m = &s.grid.meta;
    let steps = (sim_time / sim_dt + 1e-9).floor() as usize;
    (1..=steps).any(|k| {
        let p = navcore::geometry::integrate_twist(pose, &twist, sim_dt * k as f64);
        let fx = ((p.x - m.origin.x) / m.resolution).floor();
        let fy = ((p.y - m.origin.y) / m.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= m.width as f64 || fy >= m.height as f64 {
            return true;
        }
        s.grid.data[fy as usize * m.width + fx as usize] >= 253
    })
}

/// Action backend whose leaves return scripted statuses, one per poll.
/// An exhausted script answers Success.
#[derive(Default)]
pub struct StubBackend {
    pub scripts: HashMap<String, VecDeque<NodeStatus>>,
    pub polls: HashMap<String, usize>,
    pub cancels: usize,
    live: HashMap<RequestId, String>,
    next: RequestId,
}

impl StubBackend {
    pub fn script(&mut self, name: &str, s: &[NodeStatus]) {
        self.scripts.insert(name.to_string(), s.iter().copied().collect());
    }

    pub fn polls_of(&self, name: &str) -> usize {
        self.polls.get(name).copied().unwrap_or(0)
    }

    /// Requests sent and neither finished nor cancelled.
    pub fn live_requests(&self) -> usize {
        self.live.len()
    }
}

impl ActionBackend for StubBackend {
    fn send(&mut self, action: &ActionSpec, _bb: &mut Blackboard, _now: f64) -> Result<RequestId, String> {
        self.next += 1;
        self.live.insert(self.next, action.name.clone());
        Ok(self.next)
    }

    fn poll(&mut self, id: RequestId, _bb: &mut Blackboard, _now: f64) -> ActionState {
        let name = self.live.get(&id).cloned().expect("poll of unknown request");
        *self.polls.entry(name.clone()).or_default() += 1;
        let s = self.scripts.get_mut(&name).and_then(VecDeque::pop_front).unwrap_or(NodeStatus::Success);
        match s {
            NodeStatus::Running => ActionState::Running,
            NodeStatus::Failure => {
                self.live.remove(&id);
                ActionState::Failed("scripted".into())
            }
            _ => {
                self.live.remove(&id);
                ActionState::Succeeded
            }
        }
    }

    fn cancel(&mut self, id: RequestId, _now: f64) {
        if self.live.remove(&id).is_some() {
            self.cancels += 1;
        }
    }
}

/// A 4x4 m window with sparse blobs of scaled and lethal cost.
pub fn scene_grid(rng: &mut ChaCha8Rng) -> CostSnapshot {
    let meta = GridMeta::new(0.05, 0.0, 0.0, 80, 80).unwrap();
    let mut g = CostGrid::new(meta, 0);
    for _ in 0..rng.random_range(0..12) {
        let (cx, cy) = (rng.random_range(0..80i64), rng.random_range(0..80i64));
        let r = rng.random_range(1..8i64);
        let v: u8 = match rng.random_range(0..4) {
            0 => 254,
            1 => 255,
            2 => 253,
            _ => rng.random_range(1..=252),
        };
        for y in (cy - r).max(0)..(cy + r).min(80) {
            for x in (cx - r).max(0)..(cx + r).min(80) {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    let c = &mut g.data[(y * 80 + x) as usize];
                    *c = (*c).max(v);
                }
            }
        }
    }
    CostSnapshot::new(g, 0.0)
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> CriticWeights {
    // small integers make exact ties common, which exercises the tie-break
    let mut w = || if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0..4) as f64 * 0.5 };
    CriticWeights { obstacle: w(), path: w(), goal: w(), speed: w(), heading: w() }
}


/// A* against Dijkstra on random 20x20 maps with mixed cost weights. Panics on
/// a mismatch; returns how many instances had a path.
pub fn astar_trials(seed: u64, count: usize) -> usize {
    const WEIGHTS: [f64; 4] = [0.0, 0.5, 1.0, 3.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solved = 0;
    for trial in 0..count {
        let g = random_cost_grid(&mut rng, 20, 20, 0.1);
        let s = (rng.random_range(0..20), rng.random_range(0..20));
        let t = (rng.random_range(0..20), rng.random_range(0..20));
        let cost_weight = WEIGHTS[trial % 4];
        let want = dijkstra_cost(&g, s, t, quantized_weight(cost_weight));
        let params = PlannerParams { cost_weight, ..Default::default() };
        let snap = CostSnapshot::new(g, 0.0);
        let got = astar_plan(&snap, CellIndex::new(s.0, s.1), CellIndex::new(t.0, t.1), &params);
        match (got, want) {
            (Ok(p), Some(w)) => {
                assert_eq!((p.exact_cost.a, p.exact_cost.b), w, "trial {trial}");
                solved += 1;
            }
            (Err(_), None) => {}
            (got, want) => panic!("trial {trial}: planner {got:?}, oracle {want:?}"),
        }
    }
    solved
}

/// Inflation against the brute-force oracle on random 50x50 maps; panics on
/// the first differing map.
pub fn inflation_trials(seed: u64, count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..count {
        let res = [0.05, 0.1, 0.2][trial % 3];
        let density = rng.random_range(0.002..0.08);
        let mut g = random_lethal_grid(&mut rng, 50, 50, res, density);
        let inscribed = rng.random_range(0.0..0.4);
        let radius = inscribed + rng.random_range(0.0..1.2);
        let k = rng.random_range(0.0..10.0);
        let want = brute_force_inflation(&g, inscribed, radius, k);
        inflate(&mut g, &InflationParams { inscribed_radius: inscribed, inflation_radius: radius, cost_scaling: k });
        assert_eq!(g.data, want, "trial {trial}");
    }
}

/// Random controller scenes: the chosen sample must be the exhaustive argmin
/// of independently computed scores. Panics on a mismatch; returns how many
/// scenes had a feasible sample.
pub fn argmin_scenes(seed: u64, count: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut with_choice = 0;
    for scene in 0..count {
        let snap = scene_grid(&mut rng);
        let mut params = ControllerParams::default();
        params.weights = random_weights(&mut rng);
        params.vx_samples = rng.random_range(1..12);
        params.wz_samples = rng.random_range(1..16);
        let pose = Pose2D::new(rng.random_range(1.0..3.0), rng.random_range(1.0..3.0), rng.random_range(-3.1..3.1));
        let current = Twist::new(
            rng.random_range(0.0..params.limits.vx_max),
            rng.random_range(-params.limits.wz_max..params.limits.wz_max),
        );
        let segment: Vec<Pose2D> = (0..rng.random_range(1..30))
            .map(|i| Pose2D::new(pose.x + 0.05 * i as f64, pose.y + rng.random_range(-0.3..0.3), 0.0))
            .collect();
        let target = Pose2D::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), 0.0);
        let ctl = DwbController::new();
        let (trajs, scores, best) = ctl.evaluate(&pose, &current, &snap, &segment, &target, &params).unwrap();
        assert_eq!(trajs.len(), params.vx_samples * params.wz_samples);
        let want: Vec<Option<f64>> = trajs
            .iter()
            .map(|t| oracle_score(t, &snap, &segment, &target, &params.weights, params.limits.vx_max))
            .collect();
        let got: Vec<Option<f64>> = scores.iter().map(|s| s.value()).collect();
        assert_eq!(got, want, "scene {scene}");
        let twists: Vec<Twist> = trajs.iter().map(|t| t.twist).collect();
        assert_eq!(best, oracle_argmin(&want, &twists), "scene {scene}");
        with_choice += best.is_some() as usize;
    }
    with_choice
}


/// Event-driven replay: at each time the store is decayed, optionally fed
/// observations, and every key's presence is compared with the rule
/// "live at t iff observed in (t - decay, t]". Times are multiples of 1/4 and
/// the decay is a multiple of 1/4 too, so `t == expiry` happens exactly.
pub fn stvl_replay(schedule: &[(u8, u16)], decay_quarters: u16, probes: &[u16]) -> Result<(), String> {
    let decay = decay_quarters as f64 * 0.25;
    let mut store = TemporalVoxelStore::new(0.1, decay).unwrap();
    let keys: Vec<[f64; 3]> = (0..4).map(|k| [k as f64 * 0.1 + 0.05, 0.05, 0.05]).collect();
    let mut times: Vec<u16> = schedule.iter().map(|s| s.1).chain(probes.iter().copied()).collect();
    times.sort_unstable();
    times.dedup();
    for &tq in &times {
        let t = tq as f64 * 0.25;
        store.decay(t);
        for &(k, sq) in schedule {
            if sq == tq {
                store.observe(&[keys[k as usize]], t);
            }
        }
        for (k, p) in keys.iter().enumerate() {
            let live = schedule.iter().any(|&(kk, sq)| {
                let s = sq as f64 * 0.25;
                kk as usize == k && s > t - decay && s <= t
            });
            if store.contains(store.key_of(*p)) != live {
                return Err(format!("key {k} at t={t} decay={decay}: expected live={live}"));
            }
        }
    }
    Ok(())
}

