//! Loading trees from XML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::node::{ActionSpec, BtNode, NodeKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BtError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("invalid parameter for {action}: {message}")]
    InvalidParameter { action: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

type Validator = fn(&BTreeMap<String, String>) -> Result<(), String>;

/// Action names a tree may reference, with a parameter check per action.
#[derive(Clone, Default)]
pub struct ActionRegistry {
    actions: BTreeMap<String, Validator>,
}

impl std::fmt::Debug for ActionRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.actions.keys()).finish()
    }
}

/// Action tags understood by the navigation stack.
pub const BUILTIN_ACTIONS: [&str; 5] = ["ComputePathToPose", "FollowPath", "ClearCostmap", "Spin", "Wait"];

const CONTROL_TAGS: [&str; 5] = ["Sequence", "ReactiveSequence", "Fallback", "RoundRobin", "RateController"];

fn no_params(_: &BTreeMap<String, String>) -> Result<(), String> {
    Ok(())
}

fn positive(params: &BTreeMap<String, String>, key: &str) -> Result<(), String> {
    let raw = params.get(key).ok_or_else(|| format!("missing attribute {key}"))?;
    match raw.trim().parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(()),
        _ => Err(format!("{key} must be a positive number, got {raw:?}")),
    }
}

fn clear_params(p: &BTreeMap<String, String>) -> Result<(), String> {
    match p.get("scope").map(String::as_str) {
        None | Some("global") | Some("local") | Some("both") => Ok(()),
        Some(other) => Err(format!("scope must be global, local or both, got {other:?}")),
    }
}

impl ActionRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The navigation action set.
    pub fn navigation() -> Self {
        let mut r = Self::default();
        r.register("ComputePathToPose", no_params);
        r.register("FollowPath", no_params);
        r.register("ClearCostmap", clear_params);
        r.register("Spin", |p| if p.contains_key("target_yaw") { positive(p, "target_yaw") } else { Ok(()) });
        r.register("Wait", |p| if p.contains_key("duration") { positive(p, "duration") } else { Ok(()) });
        r
    }

    pub fn register(&mut self, name: &str, validate: Validator) {
        self.actions.insert(name.to_string(), validate);
    }

    pub fn register_plain(&mut self, name: &str) {
        self.register(name, no_params);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.actions.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }
}

/// A parsed tree plus where it came from.
#[derive(Debug, Clone)]
pub struct TreeSpec {
    pub root: BtNode,
    pub source: String,
    pub origin: Option<PathBuf>,
}

impl TreeSpec {
    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    pub fn load(path: &Path, registry: &ActionRegistry) -> Result<Self, BtError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BtError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let mut spec = parse_tree(&text, registry)?;
        spec.origin = Some(path.to_path_buf());
        Ok(spec)
    }
}

pub fn parse_tree(xml_text: &str, registry: &ActionRegistry) -> Result<TreeSpec, BtError> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| BtError::Xml(e.to_string()))?;
    let top = doc.root_element();
    let root_el = if top.tag_name().name() == "Root" {
        let kids: Vec<_> = top.children().filter(|n| n.is_element()).collect();
        match kids.as_slice() {
            [only] => *only,
            [] => return Err(BtError::ParseError("Root has no child".into())),
            _ => return Err(BtError::ParseError(format!("Root must have exactly one child, found {}", kids.len()))),
        }
    } else {
        top
    };
    let root = build(root_el, registry)?;
    Ok(TreeSpec { root, source: xml_text.to_string(), origin: None })
}

fn build(el: roxmltree::Node<'_, '_>, registry: &ActionRegistry) -> Result<BtNode, BtError> {
    let tag = el.tag_name().name();
    let children = el
        .children()
        .filter(|n| n.is_element())
        .map(|c| build(c, registry))
        .collect::<Result<Vec<_>, _>>()?;

    if CONTROL_TAGS.contains(&tag) {
        let kind = match tag {
            "Sequence" => NodeKind::Sequence,
            "ReactiveSequence" => NodeKind::ReactiveSequence,
            "Fallback" => NodeKind::Fallback,
            "RoundRobin" => NodeKind::RoundRobin,
            "RateController" => {
                let raw = el.attribute("hz").ok_or_else(|| BtError::ParseError("RateController requires hz".into()))?;
                let hz: f64 = raw
                    .trim()
                    .parse()
                    .map_err(|_| BtError::ParseError(format!("RateController hz {raw:?} is not a number")))?;
                if !(hz > 0.0 && hz.is_finite()) {
                    return Err(BtError::ParseError(format!("RateController hz must be > 0, got {hz}")));
                }
                if children.len() != 1 {
                    return Err(BtError::ParseError(format!(
                        "RateController expects exactly one child, found {}",
                        children.len()
                    )));
                }
                NodeKind::RateController { hz }
            }
            _ => unreachable!(),
        };
        if children.is_empty() {
            return Err(BtError::ParseError(format!("{tag} has no children")));
        }
        return Ok(BtNode::new(kind, children));
    }

    if registry.contains(tag) {
        if !children.is_empty() {
            return Err(BtError::ParseError(format!("action {tag} cannot have children")));
        }
        let params: BTreeMap<String, String> =
            el.attributes().map(|a| (a.name().to_string(), a.value().to_string())).collect();
        (registry.actions[tag])(&params)
            .map_err(|message| BtError::InvalidParameter { action: tag.to_string(), message })?;
        return Ok(BtNode::action(ActionSpec { name: tag.to_string(), params }));
    }

    if BUILTIN_ACTIONS.contains(&tag) {
        return Err(BtError::UnknownAction(tag.to_string()));
    }
    Err(BtError::ParseError(tag.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decorator_arity() {
        let xml = r#"<RateController hz="1.0"><ComputePathToPose/><Wait/></RateController>"#;
        assert!(matches!(parse_tree(xml, &ActionRegistry::navigation()), Err(BtError::ParseError(_))));
    }

    #[test]
    fn unknown_tag() {
        let err = parse_tree("<Frobnicate/>", &ActionRegistry::navigation()).unwrap_err();
        assert_eq!(err, BtError::ParseError("Frobnicate".into()));
    }

    #[test]
    fn unregistered_action() {
        let mut reg = ActionRegistry::empty();
        reg.register_plain("FollowPath");
        let err = parse_tree("<Sequence><FollowPath/><Spin/></Sequence>", &reg).unwrap_err();
        assert_eq!(err, BtError::UnknownAction("Spin".into()));
    }

    #[test]
    fn multiple_roots() {
        let xml = "<Root><Wait duration=\"1\"/><Wait duration=\"1\"/></Root>";
        assert!(matches!(parse_tree(xml, &ActionRegistry::navigation()), Err(BtError::ParseError(_))));
        // two top-level elements are not well-formed XML
        assert!(parse_tree("<Wait/><Wait/>", &ActionRegistry::navigation()).is_err());
    }

    #[test]
    fn parameter_checks() {
        let reg = ActionRegistry::navigation();
        assert!(matches!(
            parse_tree(r#"<Wait duration="-1"/>"#, &reg),
            Err(BtError::InvalidParameter { .. })
        ));
        assert!(matches!(
            parse_tree(r#"<ClearCostmap scope="everything"/>"#, &reg),
            Err(BtError::InvalidParameter { .. })
        ));
        assert!(matches!(parse_tree(r#"<RateController hz="0"><Wait/></RateController>"#, &reg), Err(BtError::ParseError(_))));
        let t = parse_tree(r#"<Spin target_yaw="1.57"/>"#, &reg).unwrap();
        let NodeKind::Action(a) = &t.root.kind else { panic!() };
        assert_eq!(a.param_f64("target_yaw"), Some(1.57));
    }
}
