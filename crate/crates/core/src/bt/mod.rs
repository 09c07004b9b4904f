//! Behavior-tree engine: node vocabulary, XML loading, and the navigator.

pub mod blackboard;
pub mod navigator;
pub mod node;
pub mod xml;

pub use blackboard::Blackboard;
pub use navigator::{navigate, NavBackend, NavEnvironment, NavError, NavResult, NavStatus, Navigator};
pub use node::{ActionBackend, ActionSpec, ActionState, BtNode, NodeKind, NodeStatus, RequestId, TickContext};
pub use xml::{parse_tree, ActionRegistry, BtError, TreeSpec, BUILTIN_ACTIONS};

/// The stock navigation tree, also shipped as `trees/navigate_w_recovery.xml`.
pub const DEFAULT_TREE_XML: &str = include_str!("../../../../trees/navigate_w_recovery.xml");

pub fn default_tree() -> TreeSpec {
    parse_tree(DEFAULT_TREE_XML, &ActionRegistry::navigation()).expect("bundled tree parses")
}
