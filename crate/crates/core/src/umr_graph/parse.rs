//! PENMAN text to `UmrGraph`.
//!
//! Attribute constants and node references share a lexical space: `Plural`
//! looks exactly like a variable. Disambiguation is two-pass — first collect
//! every declared variable, then classify each bare token as a reference iff
//! it names one of them. Tokens that are never declared (`3rd`, `FullAff`,
//! quoted strings, numbers) become attribute values.

use thiserror::Error;

use super::{
    AttributeValue, Concept, EdgeTarget, RoleLabel, UmrEdge, UmrGraph, UmrNode, Variable,
};
use std::collections::HashSet;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PenmanError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced parentheses at byte {position}")]
    UnbalancedParens { position: usize },
    #[error("variable '{variable}' is defined more than once")]
    DuplicateVariableDefinition { variable: String },
    #[error("role '{role}' at byte {position} has no target")]
    UndefinedVariableReference { role: String, position: usize },
    #[error("unexpected token '{found}' at byte {position}")]
    UnexpectedToken { found: String, position: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Slash,
    /// Role label including the leading colon.
    Role(String),
    /// Bare token: variable, concept, or unquoted constant.
    Atom(String),
    /// Quoted string kept verbatim, quotes included.
    Quoted(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Slash => "/".into(),
            Tok::Role(s) | Tok::Atom(s) | Tok::Quoted(s) => s.clone(),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, PenmanError> {
    let mut toks = Vec::new();
    let mut depth: i64 = 0;
    let bytes = text.char_indices().collect::<Vec<_>>();
    let mut i = 0;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                depth += 1;
                toks.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(PenmanError::UnbalancedParens { position: pos });
                }
                toks.push((Tok::RParen, pos));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, pos));
                i += 1;
            }
            '"' => {
                let mut lexeme = String::from('"');
                let mut j = i + 1;
                let mut closed = false;
                while j < bytes.len() {
                    let (_, cj) = bytes[j];
                    lexeme.push(cj);
                    j += 1;
                    if cj == '\\' && j < bytes.len() {
                        lexeme.push(bytes[j].1);
                        j += 1;
                    } else if cj == '"' {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(PenmanError::UnexpectedToken {
                        found: lexeme,
                        position: pos,
                    });
                }
                toks.push((Tok::Quoted(lexeme), pos));
                i = j;
            }
            _ => {
                let mut lexeme = String::new();
                let mut j = i;
                while j < bytes.len() {
                    let (_, cj) = bytes[j];
                    if cj.is_whitespace() || matches!(cj, '(' | ')' | '/' | '"') {
                        break;
                    }
                    lexeme.push(cj);
                    j += 1;
                }
                if let Some(rest) = lexeme.strip_prefix(':') {
                    if rest.is_empty() {
                        return Err(PenmanError::UnexpectedToken {
                            found: lexeme,
                            position: pos,
                        });
                    }
                    toks.push((Tok::Role(lexeme), pos));
                } else {
                    toks.push((Tok::Atom(lexeme), pos));
                }
                i = j;
            }
        }
    }
    if depth != 0 {
        return Err(PenmanError::UnbalancedParens {
            position: text.len(),
        });
    }
    Ok(toks)
}

/// Parse tree before reference resolution.
struct RawNode {
    variable: String,
    concept: String,
    relations: Vec<(String, RawTarget)>,
}

enum RawTarget {
    Child(RawNode),
    Atom(String),
    Quoted(String),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, tok: &Tok, position: usize) -> PenmanError {
        PenmanError::UnexpectedToken {
            found: tok.describe(),
            position,
        }
    }

    fn expect_atom(&mut self, what: &str) -> Result<String, PenmanError> {
        match self.bump() {
            Some((Tok::Atom(s), _)) => Ok(s),
            Some((tok, pos)) => Err(self.unexpected(&tok, pos)),
            None => Err(PenmanError::UnexpectedToken {
                found: format!("end of input (expected {what})"),
                position: self.toks.last().map(|(_, p)| *p).unwrap_or(0),
            }),
        }
    }

    fn parse_node(&mut self) -> Result<RawNode, PenmanError> {
        match self.bump() {
            Some((Tok::LParen, _)) => {}
            Some((tok, pos)) => return Err(self.unexpected(&tok, pos)),
            None => return Err(PenmanError::EmptyInput),
        }
        let variable = self.expect_atom("variable")?;
        match self.bump() {
            Some((Tok::Slash, _)) => {}
            Some((tok, pos)) => return Err(self.unexpected(&tok, pos)),
            None => {
                return Err(PenmanError::UnexpectedToken {
                    found: "end of input (expected '/')".into(),
                    position: 0,
                })
            }
        }
        let concept = self.expect_atom("concept")?;

        let mut relations = Vec::new();
        loop {
            match self.peek() {
                Some((Tok::RParen, _)) => {
                    self.bump();
                    break;
                }
                Some((Tok::Role(_), _)) => {
                    let (role, role_pos) = match self.bump() {
                        Some((Tok::Role(r), p)) => (r, p),
                        _ => unreachable!(),
                    };
                    let target = match self.peek().cloned() {
                        Some((Tok::LParen, _)) => RawTarget::Child(self.parse_node()?),
                        Some((Tok::Atom(s), _)) => {
                            self.bump();
                            RawTarget::Atom(s)
                        }
                        Some((Tok::Quoted(s), _)) => {
                            self.bump();
                            RawTarget::Quoted(s)
                        }
                        // A role directly followed by ')' or another role
                        // names nothing: structurally impossible reference.
                        _ => {
                            return Err(PenmanError::UndefinedVariableReference {
                                role,
                                position: role_pos,
                            })
                        }
                    };
                    relations.push((role, target));
                }
                Some((tok, pos)) => {
                    let (tok, pos) = (tok.clone(), *pos);
                    return Err(self.unexpected(&tok, pos));
                }
                None => {
                    // Balance was checked during tokenization.
                    return Err(PenmanError::UnbalancedParens { position: 0 });
                }
            }
        }
        Ok(RawNode {
            variable,
            concept,
            relations,
        })
    }
}

fn collect_declared(node: &RawNode, declared: &mut HashSet<String>) -> Result<(), PenmanError> {
    if !declared.insert(node.variable.clone()) {
        return Err(PenmanError::DuplicateVariableDefinition {
            variable: node.variable.clone(),
        });
    }
    for (_, target) in &node.relations {
        if let RawTarget::Child(child) = target {
            collect_declared(child, declared)?;
        }
    }
    Ok(())
}

fn flatten(
    node: &RawNode,
    declared: &HashSet<String>,
    nodes: &mut Vec<UmrNode>,
    edges: &mut Vec<UmrEdge>,
) {
    let source = Variable::new_unchecked(&node.variable);
    nodes.push(UmrNode {
        variable: source.clone(),
        concept: Concept::new_unchecked(&node.concept),
    });
    for (role, target) in &node.relations {
        let role = RoleLabel::new_unchecked(role);
        match target {
            RawTarget::Child(child) => {
                edges.push(UmrEdge {
                    source: source.clone(),
                    role,
                    target: EdgeTarget::Ref(Variable::new_unchecked(&child.variable)),
                });
                flatten(child, declared, nodes, edges);
            }
            RawTarget::Atom(token) => {
                let target = if declared.contains(token) {
                    EdgeTarget::Ref(Variable::new_unchecked(token))
                } else {
                    EdgeTarget::Attribute(AttributeValue::new_unchecked(token))
                };
                edges.push(UmrEdge {
                    source: source.clone(),
                    role,
                    target,
                });
            }
            RawTarget::Quoted(lexeme) => {
                edges.push(UmrEdge {
                    source: source.clone(),
                    role,
                    target: EdgeTarget::Attribute(AttributeValue::new_unchecked(lexeme)),
                });
            }
        }
    }
}

/// Drops metadata lines (first non-blank char `#`) that precede or interleave
/// the graph block in UMR release files.
fn strip_comment_lines(text: &str) -> String {
    text.lines()
        .filter(|line| !line.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses a single parenthesized PENMAN expression into a graph.
pub fn parse_penman(text: &str) -> Result<UmrGraph, PenmanError> {
    let body = strip_comment_lines(text);
    if body.trim().is_empty() {
        return Err(PenmanError::EmptyInput);
    }
    let toks = tokenize(&body)?;
    let mut parser = Parser { toks, pos: 0 };
    let raw = parser.parse_node()?;
    if let Some((tok, pos)) = parser.peek() {
        let (tok, pos) = (tok.clone(), *pos);
        return Err(parser.unexpected(&tok, pos));
    }

    let mut declared = HashSet::new();
    collect_declared(&raw, &mut declared)?;

    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    flatten(&raw, &declared, &mut nodes, &mut edges);

    Ok(UmrGraph {
        root: Variable::new_unchecked(&raw.variable),
        nodes,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::umr_graph::validate;

    const FIG1: &str = "(s / buy-01\n  :ARG0 (p / person\n    :refer-person 3rd\n    :refer-number Plural)\n  :ARG1 (c / car\n    :ARG1-of (n / new-01)\n    :refer-number Singular)\n  :aspect Activity\n  :modstr FullAff)";

    #[test]
    fn minimal_graph() {
        let g = parse_penman("(a / alpha)").unwrap();
        assert_eq!(g.root.as_str(), "a");
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn buy_car_graph_shape() {
        let g = parse_penman(FIG1).unwrap();
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edges.len(), 8);
        let refs = g
            .edges
            .iter()
            .filter(|e| matches!(e.target, EdgeTarget::Ref(_)))
            .count();
        let attrs = g
            .edges
            .iter()
            .filter(|e| matches!(e.target, EdgeTarget::Attribute(_)))
            .count();
        assert_eq!(refs, 3);
        assert_eq!(attrs, 5);
        assert!(validate(&g).is_valid());
    }

    #[test]
    fn buy_car_edge_order_is_text_order() {
        let g = parse_penman(FIG1).unwrap();
        let roles: Vec<&str> = g.edges.iter().map(|e| e.role.as_str()).collect();
        assert_eq!(
            roles,
            vec![
                ":ARG0",
                ":refer-person",
                ":refer-number",
                ":ARG1",
                ":ARG1-of",
                ":refer-number",
                ":aspect",
                ":modstr"
            ]
        );
    }

    #[test]
    fn reentrancy_resolved_against_declared_variables() {
        let g = parse_penman("(a / x :ARG0 (b / y) :ARG1 b)").unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 2);
        assert_eq!(
            g.edges[1].target,
            EdgeTarget::Ref(Variable::new_unchecked("b"))
        );
    }

    #[test]
    fn forward_reference_resolved() {
        let g = parse_penman("(a / x :ARG0 b :ARG1 (b / y))").unwrap();
        assert_eq!(
            g.edges[0].target,
            EdgeTarget::Ref(Variable::new_unchecked("b"))
        );
    }

    #[test]
    fn undeclared_variable_like_token_is_attribute() {
        let g = parse_penman("(a / x :mod Plural)").unwrap();
        assert_eq!(
            g.edges[0].target,
            EdgeTarget::Attribute(AttributeValue::new_unchecked("Plural"))
        );
    }

    #[test]
    fn quoted_and_numeric_constants_kept_verbatim() {
        let g = parse_penman("(a / city :name \"San Francisco\" :quant 3 :polarity -)").unwrap();
        let values: Vec<&str> = g
            .edges
            .iter()
            .map(|e| match &e.target {
                EdgeTarget::Attribute(v) => v.as_str(),
                EdgeTarget::Ref(_) => panic!("expected attribute"),
            })
            .collect();
        assert_eq!(values, vec!["\"San Francisco\"", "3", "-"]);
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(parse_penman("   \n "), Err(PenmanError::EmptyInput));
        assert_eq!(parse_penman("# only a comment"), Err(PenmanError::EmptyInput));
    }

    #[test]
    fn unbalanced_parens_rejected() {
        assert!(matches!(
            parse_penman("(a / x"),
            Err(PenmanError::UnbalancedParens { .. })
        ));
        assert!(matches!(
            parse_penman("(a / x))"),
            Err(PenmanError::UnbalancedParens { .. })
        ));
    }

    #[test]
    fn duplicate_definition_rejected() {
        let err = parse_penman("(a / x :ARG0 (a / y))").unwrap_err();
        assert_eq!(
            err,
            PenmanError::DuplicateVariableDefinition {
                variable: "a".into()
            }
        );
    }

    #[test]
    fn role_without_target_rejected() {
        assert!(matches!(
            parse_penman("(a / x :ARG0)"),
            Err(PenmanError::UndefinedVariableReference { .. })
        ));
        assert!(matches!(
            parse_penman("(a / x :ARG0 :ARG1 b)"),
            Err(PenmanError::UndefinedVariableReference { .. })
        ));
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(matches!(
            parse_penman("(a / x) extra"),
            Err(PenmanError::UnexpectedToken { .. })
        ));
    }

    #[test]
    fn comment_lines_skipped() {
        let text = "# :: snt They were buying a new car\n# index helper\n(a / alpha)";
        let g = parse_penman(text).unwrap();
        assert_eq!(g.root.as_str(), "a");
    }

    #[test]
    fn parse_is_deterministic() {
        let a = parse_penman(FIG1).unwrap();
        let b = parse_penman(FIG1).unwrap();
        assert_eq!(a, b);
    }
}
