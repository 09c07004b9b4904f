use std::any::Any;
use std::collections::HashMap;

pub const GOAL: &str = "goal";
pub const POSE: &str = "pose";
pub const PATH: &str = "path";
pub const GOAL_TOLERANCE: &str = "goal_tolerance";

/// Typed key-value store shared by the nodes of one tree.
#[derive(Default)]
pub struct Blackboard {
    entries: HashMap<String, Box<dyn Any>>,
}

impl std::fmt::Debug for Blackboard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut keys: Vec<_> = self.entries.keys().collect();
        keys.sort();
        f.debug_struct("Blackboard").field("keys", &keys).finish()
    }
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set<T: Any>(&mut self, key: &str, value: T) {
        self.entries.insert(key.to_string(), Box::new(value));
    }

    /// `None` when the key is missing or holds a different type.
    pub fn get<T: Any>(&self, key: &str) -> Option<&T> {
        self.entries.get(key).and_then(|v| v.downcast_ref::<T>())
    }

    pub fn remove(&mut self, key: &str) -> bool {
        self.entries.remove(key).is_some()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
