//! Reference semantics for the control nodes, checked against the real tree.

use navcore::bt::{ActionSpec, Blackboard, BtNode, NodeKind, NodeStatus, TickContext};

use super::StubBackend;

pub const S: NodeStatus = NodeStatus::Success;
pub const F: NodeStatus = NodeStatus::Failure;
pub const R: NodeStatus = NodeStatus::Running;

#[derive(Clone, Copy, Debug)]
pub enum Control {
    Sequence,
    Fallback,
    ReactiveSequence,
    RoundRobin,
}

/// Reference semantics of the control nodes over scripted leaves. Each leaf
/// tick consumes the next scripted status; an exhausted script succeeds.
struct Model {
    kind: Control,
    scripts: Vec<Vec<NodeStatus>>,
    polls: Vec<usize>,
    running: Vec<bool>,
    cancels: usize,
    status: NodeStatus,
    cursor: usize,
    rr_next: usize,
    rr_failed: usize,
}

impl Model {
    fn new(kind: Control, scripts: Vec<Vec<NodeStatus>>) -> Self {
        let n = scripts.len();
        Self {
            kind,
            scripts,
            polls: vec![0; n],
            running: vec![false; n],
            cancels: 0,
            status: NodeStatus::Idle,
            cursor: 0,
            rr_next: 0,
            rr_failed: 0,
        }
    }

    fn n(&self) -> usize {
        self.scripts.len()
    }

    fn poll(&mut self, i: usize) -> NodeStatus {
        let s = self.scripts[i].get(self.polls[i]).copied().unwrap_or(S);
        self.polls[i] += 1;
        self.running[i] = s == R;
        s
    }

    fn stop(&mut self, i: usize) {
        if std::mem::take(&mut self.running[i]) {
            self.cancels += 1;
        }
    }

    fn stop_all(&mut self) {
        (0..self.n()).for_each(|i| self.stop(i));
    }

    fn tick(&mut self) -> NodeStatus {
        let out = match self.kind {
            Control::Sequence | Control::Fallback => {
                let (cont, stop_on) = match self.kind {
                    Control::Sequence => (S, F),
                    _ => (F, S),
                };
                let mut result = cont;
                let mut i = self.cursor;
                while i < self.n() {
                    let s = self.poll(i);
                    if s == R {
                        self.cursor = i;
                        result = R;
                        break;
                    }
                    if s == stop_on {
                        result = stop_on;
                        break;
                    }
                    debug_assert_eq!(s, cont);
                    i += 1;
                }
                if result != R {
                    self.cursor = 0;
                    self.stop_all();
                }
                result
            }
            Control::ReactiveSequence => {
                let mut result = S;
                for i in 0..self.n() {
                    match self.poll(i) {
                        R => {
                            (i + 1..self.n()).for_each(|j| self.stop(j));
                            result = R;
                            break;
                        }
                        F => {
                            result = F;
                            break;
                        }
                        _ => {}
                    }
                }
                if result != R {
                    self.stop_all();
                }
                result
            }
            Control::RoundRobin => {
                if self.status != R {
                    self.rr_failed = 0;
                }
                loop {
                    let i = self.rr_next;
                    let s = self.poll(i);
                    if s == R {
                        break R;
                    }
                    self.rr_next = (i + 1) % self.n();
                    if s == S {
                        self.rr_failed = 0;
                        self.stop_all();
                        break S;
                    }
                    self.rr_failed += 1;
                    if self.rr_failed == self.n() {
                        self.rr_failed = 0;
                        self.stop_all();
                        break F;
                    }
                }
            }
        };
        self.status = out;
        out
    }
}

pub fn leaf(name: &str) -> BtNode {
    BtNode::action(ActionSpec::new(name))
}

fn build(kind: Control, n: usize) -> BtNode {
    let k = match kind {
        Control::Sequence => NodeKind::Sequence,
        Control::Fallback => NodeKind::Fallback,
        Control::ReactiveSequence => NodeKind::ReactiveSequence,
        Control::RoundRobin => NodeKind::RoundRobin,
    };
    BtNode::new(k, (0..n).map(|i| leaf(&format!("c{i}"))).collect())
}

/// Every script of length `len` over {Success, Failure, Running}.
fn all_scripts(len: usize) -> Vec<Vec<NodeStatus>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out.into_iter().flat_map(|p| [S, F, R].map(|s| [p.clone(), vec![s]].concat())).collect();
    }
    out
}

/// Runs every scripted combination through the real node and the model,
/// comparing statuses, per-child polls and cancels after each tick. Returns
/// the number of cases checked.
pub fn check_truth_tables() -> usize {
    const TICKS: usize = 3;
    let scripts = all_scripts(TICKS);
    let mut cases = 0;
    for kind in [Control::Sequence, Control::Fallback, Control::ReactiveSequence, Control::RoundRobin] {
        for n in 1..=3usize {
            let total = scripts.len().pow(n as u32);
            for combo in 0..total {
                let per_child: Vec<Vec<NodeStatus>> =
                    (0..n).map(|i| scripts[combo / scripts.len().pow(i as u32) % scripts.len()].clone()).collect();
                let mut model = Model::new(kind, per_child.clone());
                let mut tree = build(kind, n);
                let mut stub = StubBackend::default();
                for (i, s) in per_child.iter().enumerate() {
                    stub.script(&format!("c{i}"), s);
                }
                let mut bb = Blackboard::new();
                for t in 0..TICKS {
                    let mut ctx = TickContext { bb: &mut bb, backend: &mut stub, now: t as f64 };
                    let got = tree.tick(&mut ctx);
                    let want = model.tick();
                    assert_eq!(got, want, "{kind:?} scripts {per_child:?} tick {t}");
                    for i in 0..n {
                        assert_eq!(stub.polls_of(&format!("c{i}")), model.polls[i], "{kind:?} {per_child:?} child {i}");
                    }
                    assert_eq!(stub.cancels, model.cancels, "{kind:?} {per_child:?} tick {t}");
                    assert!(tree.running_chain_consistent());
                }
                let mut ctx = TickContext { bb: &mut bb, backend: &mut stub, now: TICKS as f64 };
                tree.halt(&mut ctx);
                assert!(tree.is_idle());
                assert_eq!(stub.live_requests(), 0);
                cases += 1;
            }
        }
    }
    cases
}

