//! `UmrGraph` back to canonical PENMAN text.
//!
//! The first edge mentioning a node expands it inline; later mentions emit
//! the bare variable. Edge order is preserved, so a graph parsed from
//! canonical text serializes back to the identical bytes.

use super::{EdgeTarget, UmrGraph, Variable};
use std::collections::HashSet;

enum Layout {
    Indented(usize),
    SingleLine,
}

/// Multi-line canonical form, `indent` spaces per nesting level.
pub fn serialize_penman(graph: &UmrGraph, indent: usize) -> String {
    render(graph, Layout::Indented(indent))
}

/// Single-line form for embedding in places where line structure matters.
pub fn serialize_penman_compact(graph: &UmrGraph) -> String {
    render(graph, Layout::SingleLine)
}

fn render(graph: &UmrGraph, layout: Layout) -> String {
    let mut out = String::new();
    let mut emitted = HashSet::new();
    write_node(graph, &graph.root, 0, &layout, &mut emitted, &mut out);
    out
}

fn write_node(
    graph: &UmrGraph,
    variable: &Variable,
    depth: usize,
    layout: &Layout,
    emitted: &mut HashSet<Variable>,
    out: &mut String,
) {
    emitted.insert(variable.clone());
    let concept = graph
        .node(variable)
        .map(|n| n.concept.as_str())
        .unwrap_or("");
    out.push('(');
    out.push_str(variable.as_str());
    out.push_str(" / ");
    out.push_str(concept);
    for edge in graph.edges_from(variable) {
        match layout {
            Layout::Indented(indent) => {
                out.push('\n');
                out.push_str(&" ".repeat(indent * (depth + 1)));
            }
            Layout::SingleLine => out.push(' '),
        }
        out.push_str(edge.role.as_str());
        out.push(' ');
        match &edge.target {
            EdgeTarget::Attribute(value) => out.push_str(value.as_str()),
            EdgeTarget::Ref(target) => {
                if !emitted.contains(target) && graph.node(target).is_some() {
                    write_node(graph, target, depth + 1, layout, emitted, out);
                } else {
                    out.push_str(target.as_str());
                }
            }
        }
    }
    out.push(')');
}
