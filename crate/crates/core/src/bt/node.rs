//! Tree nodes and their tick semantics.

use std::collections::BTreeMap;

use super::blackboard::Blackboard;

/// Slack for comparing simulated timestamps against the rate period.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeStatus {
    Idle,
    Running,
    Success,
    Failure,
}

impl NodeStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, NodeStatus::Success | NodeStatus::Failure)
    }
}

pub type RequestId = u64;

/// Progress of a request made to a task server.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionState {
    Running,
    Succeeded,
    Failed(String),
    Cancelled,
}

/// An action leaf as written in the tree: its registered name and attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    pub params: BTreeMap<String, String>,
}

impl ActionSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), params: BTreeMap::new() }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(|v| v.trim().parse().ok())
    }
}

/// The request/poll/cancel contract between action leaves and task servers.
pub trait ActionBackend {
    /// Issues a request. `Err` carries the reason the request was refused
    /// (for instance a server that is not active).
    fn send(&mut self, action: &ActionSpec, bb: &mut Blackboard, now: f64) -> Result<RequestId, String>;
    fn poll(&mut self, id: RequestId, bb: &mut Blackboard, now: f64) -> ActionState;
    fn cancel(&mut self, id: RequestId, now: f64);
}

pub struct TickContext<'a> {
    pub bb: &'a mut Blackboard,
    pub backend: &'a mut dyn ActionBackend,
    pub now: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Sequence,
    ReactiveSequence,
    Fallback,
    RoundRobin,
    RateController { hz: f64 },
    Action(ActionSpec),
}

impl NodeKind {
    pub fn tag(&self) -> &str {
        match self {
            NodeKind::Sequence => "Sequence",
            NodeKind::ReactiveSequence => "ReactiveSequence",
            NodeKind::Fallback => "Fallback",
            NodeKind::RoundRobin => "RoundRobin",
            NodeKind::RateController { .. } => "RateController",
            NodeKind::Action(a) => &a.name,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BtNode {
    pub kind: NodeKind,
    pub children: Vec<BtNode>,
    status: NodeStatus,
    /// Sequence / Fallback: index of the child to resume from.
    cursor: usize,
    /// RoundRobin: child that starts the next activation. Survives resets,
    /// cleared only by `halt`.
    rr_next: usize,
    /// RoundRobin: children that failed in the current activation.
    rr_failed: usize,
    /// RateController: time the child was last ticked fresh.
    rate_last_tick: Option<f64>,
    rate_last_terminal: Option<NodeStatus>,
    child_ticks: u64,
    request: Option<RequestId>,
    last_error: Option<String>,
}

impl BtNode {
    pub fn new(kind: NodeKind, children: Vec<BtNode>) -> Self {
        Self {
            kind,
            children,
            status: NodeStatus::Idle,
            cursor: 0,
            rr_next: 0,
            rr_failed: 0,
            rate_last_tick: None,
            rate_last_terminal: None,
            child_ticks: 0,
            request: None,
            last_error: None,
        }
    }

    pub fn action(spec: ActionSpec) -> Self {
        Self::new(NodeKind::Action(spec), Vec::new())
    }

    pub fn status(&self) -> NodeStatus {
        self.status
    }

    /// Reason for the most recent refused request on an action leaf.
    pub fn last_error(&self) -> Option<&str> {
        self.last_error.as_deref()
    }

    /// How many times a RateController has ticked its child.
    pub fn child_tick_count(&self) -> u64 {
        self.child_ticks
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(BtNode::node_count).sum::<usize>()
    }

    /// Depth-first visit of every node.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a BtNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    /// True when every Running node's parent is also Running.
    pub fn running_chain_consistent(&self) -> bool {
        self.children.iter().all(|c| {
            (self.status == NodeStatus::Running || c.status != NodeStatus::Running) && c.running_chain_consistent()
        })
    }

    /// Every node in the subtree is Idle.
    pub fn is_idle(&self) -> bool {
        self.status == NodeStatus::Idle && self.children.iter().all(BtNode::is_idle)
    }

    pub fn tick(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let status = match self.kind {
            NodeKind::Sequence => self.tick_sequence(ctx),
            NodeKind::ReactiveSequence => self.tick_reactive_sequence(ctx),
            NodeKind::Fallback => self.tick_fallback(ctx),
            NodeKind::RoundRobin => self.tick_round_robin(ctx),
            NodeKind::RateController { hz } => self.tick_rate_controller(hz, ctx),
            NodeKind::Action(_) => self.tick_action(ctx),
        };
        self.status = status;
        status
    }

    /// Cancels in-flight requests and returns the subtree to Idle, clearing
    /// every piece of execution memory.
    pub fn halt(&mut self, ctx: &mut TickContext<'_>) {
        self.stop(ctx, true);
    }

    /// Like `halt` but keeps the round-robin rotation, so escalation carries
    /// over between activations. Parents call this on their children when
    /// they finish.
    fn reset(&mut self, ctx: &mut TickContext<'_>) {
        self.stop(ctx, false);
    }

    fn stop(&mut self, ctx: &mut TickContext<'_>, full: bool) {
        if let Some(id) = self.request.take() {
            ctx.backend.cancel(id, ctx.now);
        }
        for c in &mut self.children {
            c.stop(ctx, full);
        }
        self.status = NodeStatus::Idle;
        self.cursor = 0;
        self.rr_failed = 0;
        self.rate_last_tick = None;
        self.rate_last_terminal = None;
        if full {
            self.rr_next = 0;
        }
    }

    fn reset_children(&mut self, ctx: &mut TickContext<'_>) {
        for c in &mut self.children {
            c.reset(ctx);
        }
    }

    fn tick_sequence(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let mut i = self.cursor;
        while i < self.children.len() {
            match self.children[i].tick(ctx) {
                NodeStatus::Running => {
                    self.cursor = i;
                    return NodeStatus::Running;
                }
                NodeStatus::Failure => {
                    self.finish(ctx);
                    return NodeStatus::Failure;
                }
                _ => i += 1,
            }
        }
        self.finish(ctx);
        NodeStatus::Success
    }

    fn tick_reactive_sequence(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        for i in 0..self.children.len() {
            match self.children[i].tick(ctx) {
                NodeStatus::Running => {
                    for later in &mut self.children[i + 1..] {
                        if later.status == NodeStatus::Running {
                            later.reset(ctx);
                        }
                    }
                    return NodeStatus::Running;
                }
                NodeStatus::Failure => {
                    self.finish(ctx);
                    return NodeStatus::Failure;
                }
                _ => {}
            }
        }
        self.finish(ctx);
        NodeStatus::Success
    }

    fn tick_fallback(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let mut i = self.cursor;
        while i < self.children.len() {
            match self.children[i].tick(ctx) {
                NodeStatus::Running => {
                    self.cursor = i;
                    return NodeStatus::Running;
                }
                NodeStatus::Success => {
                    self.finish(ctx);
                    return NodeStatus::Success;
                }
                _ => i += 1,
            }
        }
        self.finish(ctx);
        NodeStatus::Failure
    }

    fn tick_round_robin(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let n = self.children.len();
        if self.status != NodeStatus::Running {
            self.rr_failed = 0;
        }
        loop {
            let idx = self.rr_next % n;
            match self.children[idx].tick(ctx) {
                NodeStatus::Running => return NodeStatus::Running,
                NodeStatus::Success => {
                    self.rr_next = (idx + 1) % n;
                    self.finish(ctx);
                    return NodeStatus::Success;
                }
                _ => {
                    self.rr_next = (idx + 1) % n;
                    self.rr_failed += 1;
                    if self.rr_failed >= n {
                        self.finish(ctx);
                        return NodeStatus::Failure;
                    }
                }
            }
        }
    }

    fn tick_rate_controller(&mut self, hz: f64, ctx: &mut TickContext<'_>) -> NodeStatus {
        let child_running = self.children[0].status == NodeStatus::Running;
        let due = match self.rate_last_tick {
            None => true,
            Some(t) => ctx.now - t >= 1.0 / hz - TIME_EPS,
        };
        if !(child_running || due) {
            return self.rate_last_terminal.unwrap_or(NodeStatus::Running);
        }
        if !child_running {
            self.rate_last_tick = Some(ctx.now);
        }
        self.child_ticks += 1;
        let s = self.children[0].tick(ctx);
        if s.is_terminal() {
            self.rate_last_terminal = Some(s);
        }
        s
    }

    fn tick_action(&mut self, ctx: &mut TickContext<'_>) -> NodeStatus {
        let NodeKind::Action(spec) = &self.kind else { unreachable!() };
        let id = match self.request {
            Some(id) if self.status == NodeStatus::Running => id,
            _ => match ctx.backend.send(spec, ctx.bb, ctx.now) {
                Ok(id) => {
                    self.last_error = None;
                    self.request = Some(id);
                    id
                }
                Err(cause) => {
                    self.last_error = Some(cause);
                    self.request = None;
                    return NodeStatus::Failure;
                }
            },
        };
        match ctx.backend.poll(id, ctx.bb, ctx.now) {
            ActionState::Running => NodeStatus::Running,
            ActionState::Succeeded => {
                self.request = None;
                NodeStatus::Success
            }
            ActionState::Failed(cause) => {
                self.last_error = Some(cause);
                self.request = None;
                NodeStatus::Failure
            }
            ActionState::Cancelled => {
                self.request = None;
                NodeStatus::Failure
            }
        }
    }

    /// Post-completion cleanup for control nodes.
    fn finish(&mut self, ctx: &mut TickContext<'_>) {
        self.cursor = 0;
        self.rr_failed = 0;
        self.reset_children(ctx);
    }
}


#[cfg(test)]
mod tests {
    use super::testing::ScriptedBackend;
    use super::*;

    fn leaf(name: &str) -> BtNode {
        BtNode::action(ActionSpec::new(name))
    }

    fn tick_at(node: &mut BtNode, be: &mut ScriptedBackend, bb: &mut Blackboard, now: f64) -> NodeStatus {
        let mut ctx = TickContext { bb, backend: be, now };
        node.tick(&mut ctx)
    }

    #[test]
    fn sequence_and_fallback_basics() {
        let mut be = ScriptedBackend::default();
        let mut bb = Blackboard::new();
        let mut seq = BtNode::new(NodeKind::Sequence, vec![leaf("A"), leaf("B")]);
        assert_eq!(tick_at(&mut seq, &mut be, &mut bb, 0.0), NodeStatus::Success);

        be.script("A", &[ActionState::Failed("x".into())]);
        be.script("B", &[ActionState::Failed("y".into())]);
        let mut fb = BtNode::new(NodeKind::Fallback, vec![leaf("A"), leaf("B")]);
        assert_eq!(tick_at(&mut fb, &mut be, &mut bb, 0.0), NodeStatus::Failure);
    }

    #[test]
    fn rate_controller_one_hz() {
        let mut be = ScriptedBackend::default();
        let mut bb = Blackboard::new();
        let mut rc = BtNode::new(NodeKind::RateController { hz: 1.0 }, vec![leaf("Plan")]);
        for t in [0.0, 0.5, 1.0] {
            assert_eq!(tick_at(&mut rc, &mut be, &mut bb, t), NodeStatus::Success);
        }
        let times: Vec<f64> = be.sent.iter().map(|(_, t)| *t).collect();
        assert_eq!(times, vec![0.0, 1.0]);
    }

    #[test]
    fn round_robin_rotates() {
        let mut be = ScriptedBackend::default();
        let mut bb = Blackboard::new();
        let mut rr = BtNode::new(NodeKind::RoundRobin, vec![leaf("A"), leaf("B"), leaf("C")]);
        assert_eq!(tick_at(&mut rr, &mut be, &mut bb, 0.0), NodeStatus::Success);
        assert_eq!(tick_at(&mut rr, &mut be, &mut bb, 0.1), NodeStatus::Success);
        assert_eq!(be.sent_names(), vec!["A", "B"]);
    }

    #[test]
    fn halt_cancels_running_leaf_and_restarts() {
        let mut be = ScriptedBackend::default();
        be.script("FollowPath", &[ActionState::Running, ActionState::Running]);
        let mut bb = Blackboard::new();
        let mut seq = BtNode::new(NodeKind::Sequence, vec![leaf("Plan"), leaf("FollowPath")]);
        assert_eq!(tick_at(&mut seq, &mut be, &mut bb, 0.0), NodeStatus::Running);
        let mut ctx = TickContext { bb: &mut bb, backend: &mut be, now: 0.1 };
        seq.halt(&mut ctx);
        assert!(seq.is_idle());
        assert_eq!(be.cancelled, vec!["FollowPath"]);
        // second halt is a no-op
        let mut ctx = TickContext { bb: &mut bb, backend: &mut be, now: 0.2 };
        seq.halt(&mut ctx);
        assert_eq!(be.cancelled.len(), 1);
        // restart from the first child
        tick_at(&mut seq, &mut be, &mut bb, 0.3);
        assert_eq!(be.sent_names(), vec!["Plan", "FollowPath", "Plan", "FollowPath"]);
    }

    #[test]
    fn refused_request_fails_with_cause() {
        let mut be = ScriptedBackend { refuse: vec!["FollowPath".into()], ..Default::default() };
        let mut bb = Blackboard::new();
        let mut n = leaf("FollowPath");
        assert_eq!(tick_at(&mut n, &mut be, &mut bb, 0.0), NodeStatus::Failure);
        assert_eq!(n.last_error(), Some("ServerUnavailable"));
    }

    #[test]
    fn reactive_sequence_halts_later_running_child() {
        let mut be = ScriptedBackend::default();
        be.script("Cond", &[ActionState::Succeeded, ActionState::Running]);
        be.script("Act", &[ActionState::Running, ActionState::Running]);
        let mut bb = Blackboard::new();
        let mut rs = BtNode::new(NodeKind::ReactiveSequence, vec![leaf("Cond"), leaf("Act")]);
        assert_eq!(tick_at(&mut rs, &mut be, &mut bb, 0.0), NodeStatus::Running);
        assert_eq!(tick_at(&mut rs, &mut be, &mut bb, 0.1), NodeStatus::Running);
        assert_eq!(be.cancelled, vec!["Act"]);
        assert!(rs.running_chain_consistent());
    }
}
