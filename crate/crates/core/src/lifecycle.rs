//! Managed-server state machine and the ordered bringup/shutdown manager.

use std::fmt;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeState {
    Unconfigured,
    Inactive,
    Active,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Transition {
    Configure,
    Activate,
    Deactivate,
    Cleanup,
    Shutdown,
}

impl Transition {
    pub const ALL: [Transition; 5] =
        [Transition::Configure, Transition::Activate, Transition::Deactivate, Transition::Cleanup, Transition::Shutdown];
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The legal transition table. `None` marks an illegal pair.
pub fn transition_target(state: NodeState, t: Transition) -> Option<NodeState> {
    use NodeState::*;
    use Transition::*;
    match (state, t) {
        (Unconfigured, Configure) => Some(Inactive),
        (Inactive, Activate) => Some(Active),
        (Active, Deactivate) => Some(Inactive),
        (Inactive, Cleanup) => Some(Unconfigured),
        (Finalized, _) => None,
        (_, Shutdown) => Some(Finalized),
        _ => None,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifecycleError {
    #[error("{server}: illegal transition {transition} from {state:?}")]
    IllegalTransition { server: String, state: NodeState, transition: Transition },
    #[error("{server}: {transition} hook failed: {reason}")]
    TransitionFailed { server: String, transition: Transition, reason: String },
    #[error("bringup failed at server {0}")]
    BringupFailed(String),
    #[error("{0} is not active")]
    NotActive(String),
}

/// Per-server transition callbacks. A hook returning `Err` vetoes the transition.
pub trait LifecycleHooks {
    fn on_transition(&mut self, _t: Transition) -> Result<(), String> {
        Ok(())
    }
}

/// Anything the [`LifecycleManager`] can drive.
pub trait Managed {
    fn name(&self) -> &str;
    fn state(&self) -> NodeState;
    fn request_transition(&mut self, t: Transition) -> Result<NodeState, LifecycleError>;
    /// Marks the server finalized without running its hook. Used when a
    /// shutdown hook fails and the manager continues best-effort.
    fn force_finalize(&mut self);
}

/// A server wrapped in the lifecycle state machine.
#[derive(Debug)]
pub struct ManagedServer<H> {
    name: String,
    state: NodeState,
    hooks: H,
    accepted: usize,
}

impl<H: LifecycleHooks> ManagedServer<H> {
    pub fn new(name: impl Into<String>, hooks: H) -> Self {
        Self { name: name.into(), state: NodeState::Unconfigured, hooks, accepted: 0 }
    }

    pub fn hooks(&self) -> &H {
        &self.hooks
    }

    /// Mutable access to the server, bypassing the state check. Meant for
    /// configuration before bringup and for inspection in tests.
    pub fn hooks_mut(&mut self) -> &mut H {
        &mut self.hooks
    }

    /// Mutable access for task execution; only granted while Active.
    pub fn active(&mut self) -> Result<&mut H, LifecycleError> {
        if self.state == NodeState::Active {
            Ok(&mut self.hooks)
        } else {
            Err(LifecycleError::NotActive(self.name.clone()))
        }
    }

    pub fn is_active(&self) -> bool {
        self.state == NodeState::Active
    }

    /// Number of transitions accepted so far.
    pub fn accepted_transitions(&self) -> usize {
        self.accepted
    }
}

impl<H: LifecycleHooks> Managed for ManagedServer<H> {
    fn name(&self) -> &str {
        &self.name
    }

    fn state(&self) -> NodeState {
        self.state
    }

    fn request_transition(&mut self, t: Transition) -> Result<NodeState, LifecycleError> {
        if self.state == NodeState::Finalized && t == Transition::Shutdown {
            return Ok(NodeState::Finalized);
        }
        let target = transition_target(self.state, t).ok_or_else(|| LifecycleError::IllegalTransition {
            server: self.name.clone(),
            state: self.state,
            transition: t,
        })?;
        self.hooks.on_transition(t).map_err(|reason| LifecycleError::TransitionFailed {
            server: self.name.clone(),
            transition: t,
            reason,
        })?;
        self.state = target;
        self.accepted += 1;
        Ok(target)
    }

    fn force_finalize(&mut self) {
        self.state = NodeState::Finalized;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionLogEntry {
    pub time: f64,
    pub server: String,
    pub transition: Transition,
    pub ok: bool,
    pub detail: String,
}

/// Brings a list of servers up in order and tears them down in reverse.
///
/// The manager only remembers server names; the servers themselves are
/// passed in for each operation so their owner keeps direct access.
#[derive(Debug, Default)]
pub struct LifecycleManager {
    order: Vec<String>,
    log: Vec<TransitionLogEntry>,
}

impl LifecycleManager {
    pub fn new<I, S>(order: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { order: order.into_iter().map(Into::into).collect(), log: Vec::new() }
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn log(&self) -> &[TransitionLogEntry] {
        &self.log
    }

    fn record(&mut self, time: f64, server: &str, t: Transition, res: &Result<NodeState, LifecycleError>) {
        let (ok, detail) = match res {
            Ok(s) => (true, format!("{s:?}")),
            Err(e) => (false, e.to_string()),
        };
        if ok {
            info!("[{time:.3}] lifecycle {server}: {t} -> {detail}");
        } else {
            warn!("[{time:.3}] lifecycle {server}: {t} failed: {detail}");
        }
        self.log.push(TransitionLogEntry { time, server: server.to_string(), transition: t, ok, detail });
    }

    fn check_order(&self, servers: &[&mut dyn Managed]) {
        debug_assert_eq!(
            servers.iter().map(|s| s.name().to_string()).collect::<Vec<_>>(),
            self.order,
            "servers passed in a different order than registered"
        );
    }

    /// Configures every server in order, then activates every server in order.
    /// Stops at the first failure without rolling back.
    pub fn startup(&mut self, servers: &mut [&mut dyn Managed], time: f64) -> Result<(), LifecycleError> {
        self.check_order(servers);
        for phase in [Transition::Configure, Transition::Activate] {
            for s in servers.iter_mut() {
                let res = s.request_transition(phase);
                let name = s.name().to_string();
                self.record(time, &name, phase, &res);
                if res.is_err() {
                    return Err(LifecycleError::BringupFailed(name));
                }
            }
        }
        Ok(())
    }

    /// Deactivates active servers, then shuts every server down, both in
    /// reverse order. Hook failures are logged and the server is finalized anyway.
    pub fn shutdown(&mut self, servers: &mut [&mut dyn Managed], time: f64) {
        self.check_order(servers);
        for s in servers.iter_mut().rev() {
            if s.state() == NodeState::Active {
                let res = s.request_transition(Transition::Deactivate);
                let name = s.name().to_string();
                self.record(time, &name, Transition::Deactivate, &res);
            }
        }
        for s in servers.iter_mut().rev() {
            if s.state() == NodeState::Finalized {
                continue;
            }
            let res = s.request_transition(Transition::Shutdown);
            let name = s.name().to_string();
            self.record(time, &name, Transition::Shutdown, &res);
            if res.is_err() {
                s.force_finalize();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;
    use std::rc::Rc;

    use proptest::prelude::*;

    use super::*;

    #[derive(Default)]
    struct Recorder {
        id: usize,
        calls: Rc<RefCell<Vec<(usize, Transition)>>>,
        fail_on: Option<Transition>,
    }

    impl LifecycleHooks for Recorder {
        fn on_transition(&mut self, t: Transition) -> Result<(), String> {
            if self.fail_on == Some(t) {
                return Err("injected".into());
            }
            self.calls.borrow_mut().push((self.id, t));
            Ok(())
        }
    }

    fn servers(n: usize, calls: &Rc<RefCell<Vec<(usize, Transition)>>>) -> Vec<ManagedServer<Recorder>> {
        (1..=n)
            .map(|id| ManagedServer::new(format!("server{id}"), Recorder { id, calls: calls.clone(), fail_on: None }))
            .collect()
    }

    fn manager(n: usize) -> LifecycleManager {
        LifecycleManager::new((1..=n).map(|i| format!("server{i}")))
    }

    #[test]
    fn table_examples() {
        let mut s = ManagedServer::new("s", Recorder::default());
        assert_eq!(s.request_transition(Transition::Configure).unwrap(), NodeState::Inactive);
        s.request_transition(Transition::Activate).unwrap();
        assert!(matches!(
            s.request_transition(Transition::Configure),
            Err(LifecycleError::IllegalTransition { .. })
        ));
        assert_eq!(s.state(), NodeState::Active);
        s.request_transition(Transition::Deactivate).unwrap();
        assert_eq!(s.request_transition(Transition::Shutdown).unwrap(), NodeState::Finalized);
        // idempotent on Finalized
        assert_eq!(s.request_transition(Transition::Shutdown).unwrap(), NodeState::Finalized);
        assert!(s.request_transition(Transition::Configure).is_err());
    }

    #[test]
    fn hook_failure_leaves_state() {
        let mut s = ManagedServer::new("s", Recorder { fail_on: Some(Transition::Configure), ..Default::default() });
        let err = s.request_transition(Transition::Configure).unwrap_err();
        assert!(matches!(err, LifecycleError::TransitionFailed { .. }));
        assert_eq!(s.state(), NodeState::Unconfigured);
        assert_eq!(s.accepted_transitions(), 0);
    }

    #[test]
    fn active_guard() {
        let mut s = ManagedServer::new("planner", Recorder::default());
        assert!(matches!(s.active(), Err(LifecycleError::NotActive(_))));
        s.request_transition(Transition::Configure).unwrap();
        s.request_transition(Transition::Activate).unwrap();
        assert!(s.active().is_ok());
    }

    #[test]
    fn startup_orders_configure_then_activate() {
        let calls = Rc::new(RefCell::new(Vec::new()));
        let mut v = servers(4, &calls);
        let mut mgr = manager(4);
        let mut refs: Vec<&mut dyn Managed> = v.iter_mut().map(|s| s as &mut dyn Managed).collect();
        mgr.startup(&mut refs, 0.0).unwrap();
        let got: Vec<_> = calls.borrow().clone();
        let want: Vec<_> = (1..=4)
            .map(|i| (i, Transition::Configure))
            .chain((1..=4).map(|i| (i, Transition::Activate)))
            .collect();
        assert_eq!(got, want);
        assert!(v.iter().all(|s| s.state() == NodeState::Active));
    }

    #[test]
    fn startup_failure_names_server_without_rollback() {
        let calls = Rc::new(RefCell::new(Vec::new()));
        let mut v = servers(4, &calls);
        v[1].hooks_mut().fail_on = Some(Transition::Configure);
        let mut mgr = manager(4);
        let mut refs: Vec<&mut dyn Managed> = v.iter_mut().map(|s| s as &mut dyn Managed).collect();
        let err = mgr.startup(&mut refs, 0.0).unwrap_err();
        assert_eq!(err, LifecycleError::BringupFailed("server2".into()));
        assert_eq!(v[0].state(), NodeState::Inactive);
        assert_eq!(v[1].state(), NodeState::Unconfigured);
        assert_eq!(v[2].state(), NodeState::Unconfigured);
        assert_eq!(v[3].state(), NodeState::Unconfigured);
    }

    #[test]
    fn empty_manager_is_noop() {
        let mut mgr = LifecycleManager::default();
        mgr.startup(&mut [], 0.0).unwrap();
        mgr.shutdown(&mut [], 0.0);
        assert!(mgr.log().is_empty());
    }

    #[test]
    fn shutdown_reverse_order_and_mixed_states() {
        let calls = Rc::new(RefCell::new(Vec::new()));
        let mut v = servers(3, &calls);
        let mut mgr = manager(3);
        {
            let mut refs: Vec<&mut dyn Managed> = v.iter_mut().map(|s| s as &mut dyn Managed).collect();
            mgr.startup(&mut refs, 0.0).unwrap();
        }
        v[1].request_transition(Transition::Deactivate).unwrap();
        v[2].request_transition(Transition::Shutdown).unwrap();
        calls.borrow_mut().clear();
        let mut refs: Vec<&mut dyn Managed> = v.iter_mut().map(|s| s as &mut dyn Managed).collect();
        mgr.shutdown(&mut refs, 1.0);
        assert_eq!(
            calls.borrow().clone(),
            vec![(1, Transition::Deactivate), (2, Transition::Shutdown), (1, Transition::Shutdown)]
        );
        assert!(v.iter().all(|s| s.state() == NodeState::Finalized));
    }

    #[test]
    fn shutdown_hook_failure_still_finalizes() {
        let calls = Rc::new(RefCell::new(Vec::new()));
        let mut v = servers(2, &calls);
        v[0].hooks_mut().fail_on = Some(Transition::Shutdown);
        let mut mgr = manager(2);
        let mut refs: Vec<&mut dyn Managed> = v.iter_mut().map(|s| s as &mut dyn Managed).collect();
        mgr.shutdown(&mut refs, 0.0);
        assert!(v.iter().all(|s| s.state() == NodeState::Finalized));
        assert!(mgr.log().iter().any(|e| !e.ok));
    }

    fn reachable(s: NodeState) -> bool {
        matches!(s, NodeState::Unconfigured | NodeState::Inactive | NodeState::Active | NodeState::Finalized)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn random_transition_sequences(seq in proptest::collection::vec(0usize..5, 0..20), fail_mask in any::<u8>()) {
            let mut s = ManagedServer::new("s", Recorder::default());
            let mut accepted = 0;
            for (i, t) in seq.into_iter().enumerate() {
                let t = Transition::ALL[t];
                let before = s.state();
                s.hooks_mut().fail_on = if fail_mask & (1 << (i % 8)) != 0 { Some(t) } else { None };
                match s.request_transition(t) {
                    Ok(after) => {
                        let expected = if before == NodeState::Finalized { Some(NodeState::Finalized) } else { transition_target(before, t) };
                        prop_assert_eq!(Some(after), expected);
                        if before != NodeState::Finalized { accepted += 1; }
                    }
                    Err(_) => prop_assert_eq!(s.state(), before),
                }
                prop_assert!(reachable(s.state()));
            }
            prop_assert_eq!(s.accepted_transitions(), accepted);
        }
    }
}
