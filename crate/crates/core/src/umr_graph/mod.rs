//! Sentence-level UMR graphs and their PENMAN text form.
//!
//! A graph is a rooted, directed structure: concept nodes introduced as
//! `(variable / concept)`, role edges between them, and attribute leaves
//! (lattice values like `Plural` or `FullAff`, numbers, quoted strings).
//! Parsing and serialization round-trip: `parse_penman(serialize_penman(g))`
//! is isomorphic to `g` for every valid graph.

mod parse;
mod serialize;

pub use parse::{parse_penman, PenmanError};
pub use serialize::{serialize_penman, serialize_penman_compact};

use std::collections::{HashMap, HashSet};
use std::fmt;

/// A node handle such as `s`, `p` or `s1p`: a letter followed by letters or digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable(String);

impl Variable {
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        Self::is_valid_name(&name).then_some(Variable(name))
    }

    /// Builds a variable without checking the lexical rule. `validate` will
    /// flag the graph if the name is not well-formed.
    pub fn new_unchecked(name: impl Into<String>) -> Self {
        Variable(name.into())
    }

    pub fn is_valid_name(name: &str) -> bool {
        let mut chars = name.chars();
        match chars.next() {
            Some(c) if c.is_ascii_alphabetic() => chars.all(|c| c.is_ascii_alphanumeric()),
            _ => false,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A concept label: a sense-tagged predicate (`buy-01`) or a bare concept (`car`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Concept(String);

impl Concept {
    pub fn new(label: impl Into<String>) -> Option<Self> {
        let label = label.into();
        (!label.is_empty() && !label.chars().any(char::is_whitespace)).then_some(Concept(label))
    }

    pub fn new_unchecked(label: impl Into<String>) -> Self {
        Concept(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An edge label, always written with its leading colon (`:ARG0`, `:refer-number`).
/// Inverse roles end with `-of`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoleLabel(String);

impl RoleLabel {
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        (name.len() > 1 && name.starts_with(':')).then_some(RoleLabel(name))
    }

    pub fn new_unchecked(name: impl Into<String>) -> Self {
        RoleLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_inverse(&self) -> bool {
        self.0.ends_with("-of")
    }
}

impl fmt::Display for RoleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A constant leaf stored verbatim: lattice values (`3rd`, `Plural`), numbers,
/// or quoted strings including their quotes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttributeValue(String);

impl AttributeValue {
    pub fn new(value: impl Into<String>) -> Option<Self> {
        let value = value.into();
        (!value.is_empty()).then_some(AttributeValue(value))
    }

    pub fn new_unchecked(value: impl Into<String>) -> Self {
        AttributeValue(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// What an edge points at: another node, or a constant.
///
/// The split is decided purely by whether the token names a variable declared
/// somewhere in the same graph; see `parse_penman`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EdgeTarget {
    Ref(Variable),
    Attribute(AttributeValue),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UmrNode {
    pub variable: Variable,
    pub concept: Concept,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UmrEdge {
    pub source: Variable,
    pub role: RoleLabel,
    pub target: EdgeTarget,
}

/// One sentence-level UMR graph. `edges` preserve source-text order so that
/// canonical re-serialization reproduces the original nesting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UmrGraph {
    pub root: Variable,
    pub nodes: Vec<UmrNode>,
    pub edges: Vec<UmrEdge>,
}

impl UmrGraph {
    pub fn node(&self, variable: &Variable) -> Option<&UmrNode> {
        self.nodes.iter().find(|n| &n.variable == variable)
    }

    pub fn edges_from<'a>(&'a self, variable: &'a Variable) -> impl Iterator<Item = &'a UmrEdge> {
        self.edges.iter().filter(move |e| &e.source == variable)
    }

    pub fn declared_variables(&self) -> HashSet<&str> {
        self.nodes.iter().map(|n| n.variable.as_str()).collect()
    }

    /// Structural equality up to ordering: same root, same set of
    /// (variable, concept) nodes, same multiset of edges.
    pub fn is_isomorphic_to(&self, other: &UmrGraph) -> bool {
        if self.root != other.root || self.nodes.len() != other.nodes.len() {
            return false;
        }
        let mine: HashSet<(&str, &str)> = self
            .nodes
            .iter()
            .map(|n| (n.variable.as_str(), n.concept.as_str()))
            .collect();
        let theirs: HashSet<(&str, &str)> = other
            .nodes
            .iter()
            .map(|n| (n.variable.as_str(), n.concept.as_str()))
            .collect();
        if mine != theirs {
            return false;
        }
        edge_multiset(&self.edges) == edge_multiset(&other.edges)
    }
}

fn edge_multiset(edges: &[UmrEdge]) -> HashMap<&UmrEdge, usize> {
    let mut counts = HashMap::new();
    for edge in edges {
        *counts.entry(edge).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    DuplicateVariable,
    UnreachableNode,
    UndefinedEdgeSource,
    UndefinedReference,
    InvalidVariable,
    InvalidConcept,
    InvalidRole,
    InvalidAttribute,
    MissingRootNode,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Location of the offending element, e.g. `nodes[1].variable` or `edges[3].target`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "{:?} at {}: {}", v.kind, v.path, v.message)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant and reports all violations. Never fails:
/// a malformed graph yields a non-empty report, not a panic.
pub fn validate(graph: &UmrGraph) -> ValidationReport {
    let mut violations = Vec::new();

    let declared: HashSet<&str> = graph.declared_variables();

    if !declared.contains(graph.root.as_str()) {
        violations.push(Violation {
            kind: ViolationKind::MissingRootNode,
            path: "root".into(),
            message: format!("root variable '{}' has no node", graph.root),
        });
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (idx, node) in graph.nodes.iter().enumerate() {
        *seen.entry(node.variable.as_str()).or_insert(0) += 1;
        if !Variable::is_valid_name(node.variable.as_str()) {
            violations.push(Violation {
                kind: ViolationKind::InvalidVariable,
                path: format!("nodes[{idx}].variable"),
                message: format!("'{}' is not a valid variable name", node.variable),
            });
        }
        let concept = node.concept.as_str();
        if concept.is_empty() || concept.chars().any(char::is_whitespace) {
            violations.push(Violation {
                kind: ViolationKind::InvalidConcept,
                path: format!("nodes[{idx}].concept"),
                message: format!("'{concept}' is not a valid concept label"),
            });
        }
    }
    // One violation per duplicated name, however many times it repeats.
    let mut dups: Vec<&str> = seen.iter().filter(|(_, &n)| n > 1).map(|(&v, _)| v).collect();
    dups.sort_unstable();
    for name in dups {
        violations.push(Violation {
            kind: ViolationKind::DuplicateVariable,
            path: "nodes".into(),
            message: format!("variable '{name}' is defined more than once"),
        });
    }

    for (idx, edge) in graph.edges.iter().enumerate() {
        let role = edge.role.as_str();
        if role.len() < 2 || !role.starts_with(':') {
            violations.push(Violation {
                kind: ViolationKind::InvalidRole,
                path: format!("edges[{idx}].role"),
                message: format!("'{role}' is not a valid role label"),
            });
        }
        if !declared.contains(edge.source.as_str()) {
            violations.push(Violation {
                kind: ViolationKind::UndefinedEdgeSource,
                path: format!("edges[{idx}].source"),
                message: format!("edge source '{}' is not a defined node", edge.source),
            });
        }
        match &edge.target {
            EdgeTarget::Ref(var) => {
                if !declared.contains(var.as_str()) {
                    violations.push(Violation {
                        kind: ViolationKind::UndefinedReference,
                        path: format!("edges[{idx}].target"),
                        message: format!("reference to undefined variable '{var}'"),
                    });
                }
            }
            EdgeTarget::Attribute(value) => {
                if value.as_str().is_empty() {
                    violations.push(Violation {
                        kind: ViolationKind::InvalidAttribute,
                        path: format!("edges[{idx}].target"),
                        message: "empty attribute value".into(),
                    });
                }
            }
        }
    }

    // Reachability over the surface structure: root, then edge targets.
    let mut reachable: HashSet<&str> = HashSet::new();
    let mut frontier = vec![graph.root.as_str()];
    while let Some(var) = frontier.pop() {
        if !reachable.insert(var) {
            continue;
        }
        for edge in graph.edges.iter().filter(|e| e.source.as_str() == var) {
            if let EdgeTarget::Ref(target) = &edge.target {
                frontier.push(target.as_str());
            }
        }
    }
    for (idx, node) in graph.nodes.iter().enumerate() {
        if !reachable.contains(node.variable.as_str()) {
            violations.push(Violation {
                kind: ViolationKind::UnreachableNode,
                path: format!("nodes[{idx}]"),
                message: format!("node '{}' is not reachable from the root", node.variable),
            });
        }
    }

    ValidationReport { violations }
}
