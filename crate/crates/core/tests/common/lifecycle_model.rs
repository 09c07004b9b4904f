//! Independent statement of the lifecycle state machine.

use navcore::lifecycle::{LifecycleError, LifecycleHooks, Managed, ManagedServer, NodeState, Transition};

pub const TRANSITIONS: [Transition; 5] =
    [Transition::Configure, Transition::Activate, Transition::Deactivate, Transition::Cleanup, Transition::Shutdown];

/// (from, transition, to)
const LEGAL: [(NodeState, Transition, NodeState); 8] = [
    (NodeState::Unconfigured, Transition::Configure, NodeState::Inactive),
    (NodeState::Inactive, Transition::Activate, NodeState::Active),
    (NodeState::Active, Transition::Deactivate, NodeState::Inactive),
    (NodeState::Inactive, Transition::Cleanup, NodeState::Unconfigured),
    (NodeState::Unconfigured, Transition::Shutdown, NodeState::Finalized),
    (NodeState::Inactive, Transition::Shutdown, NodeState::Finalized),
    (NodeState::Active, Transition::Shutdown, NodeState::Finalized),
    (NodeState::Finalized, Transition::Shutdown, NodeState::Finalized),
];

pub fn expected(from: NodeState, t: Transition) -> Option<NodeState> {
    LEGAL.iter().find(|(f, tt, _)| *f == from && *tt == t).map(|(_, _, to)| *to)
}

/// Hook that vetoes according to a script and counts calls.
#[derive(Default)]
pub struct Scripted {
    pub vetoes: Vec<bool>,
    pub calls: usize,
}

impl LifecycleHooks for Scripted {
    fn on_transition(&mut self, _t: Transition) -> Result<(), String> {
        let veto = self.vetoes.get(self.calls).copied().unwrap_or(false);
        self.calls += 1;
        if veto {
            Err("vetoed".into())
        } else {
            Ok(())
        }
    }
}

/// Drives one server through `seq` (indices into [`TRANSITIONS`]) and checks
/// every step against the table. Illegal requests must leave the state and
/// the hook untouched.
pub fn replay_transitions(seq: &[usize], vetoes: Vec<bool>) -> Result<(), String> {
    let mut s = ManagedServer::new("srv", Scripted { vetoes, calls: 0 });
    let mut hook_oks = 0;
    for &i in seq {
        let t = TRANSITIONS[i];
        let before = s.state();
        let calls_before = s.hooks().calls;
        let res = s.request_transition(t);
        let ctx = format!("{t:?} from {before:?}: {res:?}");
        match expected(before, t) {
            None => {
                if !matches!(res, Err(LifecycleError::IllegalTransition { .. })) {
                    return Err(format!("expected rejection, {ctx}"));
                }
                if s.state() != before || s.hooks().calls != calls_before {
                    return Err(format!("illegal request mutated the server, {ctx}"));
                }
            }
            Some(_) if before == NodeState::Finalized => {
                if res != Ok(NodeState::Finalized) || s.hooks().calls != calls_before {
                    return Err(format!("repeated shutdown misbehaved, {ctx}"));
                }
            }
            Some(to) => {
                if s.hooks().calls != calls_before + 1 {
                    return Err(format!("hook not run exactly once, {ctx}"));
                }
                match res {
                    Ok(got) if got == to && s.state() == to => hook_oks += 1,
                    Err(LifecycleError::TransitionFailed { .. }) if s.state() == before => {}
                    _ => return Err(format!("wrong outcome, {ctx}, now {:?}", s.state())),
                }
            }
        }
        if s.is_active() != (s.state() == NodeState::Active) {
            return Err(format!("is_active disagrees with {:?}", s.state()));
        }
    }
    if s.accepted_transitions() != hook_oks {
        return Err(format!("accepted_transitions {} but {hook_oks} succeeded", s.accepted_transitions()));
    }
    Ok(())
}
