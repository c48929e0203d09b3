//! Python definition extraction over a tree-sitter syntax tree.

use tree_sitter::{Node, Parser};

use super::{CallSite, ChildRef, CodeUnit, EdgeKind, Location, UnitKind};
use crate::error::{Error, Result};

const FUNCTION: &str = "function_definition";
const CLASS: &str = "class_definition";
const DECORATED: &str = "decorated_definition";

pub(super) fn extract(path: &str, source: &str) -> Result<Vec<CodeUnit>> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .map_err(|e| Error::parse(format!("loading python grammar: {e}"), None))?;
    let tree = parser
        .parse(source, None)
        .ok_or_else(|| Error::parse(format!("{path}: parser produced no tree"), None))?;
    let root = tree.root_node();
    if root.has_error() {
        let line = first_error_line(root).unwrap_or(1);
        return Err(Error::parse(format!("{path}: syntax error near line {line}"), None));
    }

    let lines: Vec<&str> = super::split_lines(source);
    let mut cx = Extractor {
        path,
        src: source.as_bytes(),
        lines: &lines,
        units: Vec::new(),
        seen: std::collections::HashMap::new(),
    };
    cx.walk(root, None, "");
    Ok(cx.units)
}

fn first_error_line(node: Node) -> Option<usize> {
    if node.is_error() || node.is_missing() {
        return Some(node.start_position().row + 1);
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        if child.has_error() {
            if let Some(l) = first_error_line(child) {
                return Some(l);
            }
        }
    }
    None
}

struct Extractor<'a> {
    path: &'a str,
    src: &'a [u8],
    lines: &'a [&'a str],
    units: Vec<CodeUnit>,
    seen: std::collections::HashMap<String, usize>,
}

impl<'a> Extractor<'a> {
    /// Walks `node`, emitting a unit for every definition. `parent` is the
    /// index of the enclosing unit in `self.units`.
    fn walk(&mut self, node: Node<'a>, parent: Option<usize>, prefix: &str) {
        let mut cursor = node.walk();
        let children: Vec<Node> = node.named_children(&mut cursor).collect();
        for child in children {
            match definition_of(child) {
                Some((outer, def)) => {
                    let idx = self.push_unit(outer, def, parent, prefix);
                    let qualified = self.units[idx].name.clone().unwrap_or_default();
                    if let Some(body) = def.child_by_field_name("body") {
                        self.walk(body, Some(idx), &qualified);
                    }
                }
                None => self.walk(child, parent, prefix),
            }
        }
    }

    fn push_unit(&mut self, outer: Node<'a>, def: Node<'a>, parent: Option<usize>, prefix: &str) -> usize {
        let short = def
            .child_by_field_name("name")
            .and_then(|n| n.utf8_text(self.src).ok())
            .unwrap_or("<anonymous>");
        let name = if prefix.is_empty() {
            short.to_string()
        } else {
            format!("{prefix}.{short}")
        };
        let count = self.seen.entry(name.clone()).or_insert(0);
        *count += 1;
        let id = if *count == 1 {
            format!("{}:{}", self.path, name)
        } else {
            format!("{}:{}#{}", self.path, name, count)
        };

        let start_line = outer.start_position().row + 1;
        let end_line = definition_end_row(def) + 1;
        let def_row = def.start_position().row;
        let body_row = def
            .child_by_field_name("body")
            .map(|b| b.start_position().row)
            .unwrap_or(def_row);
        let sig_end = if body_row > def_row { body_row - 1 } else { def_row };
        let signature = self.lines[def_row..=sig_end.min(self.lines.len() - 1)]
            .iter()
            .map(|l| l.trim_end())
            .collect::<Vec<_>>()
            .join("\n");

        let text = self.lines[start_line - 1..end_line].join("\n");
        let kind = if def.kind() == CLASS {
            UnitKind::Class
        } else {
            UnitKind::Function
        };
        let mut calls = Vec::new();
        collect_calls((outer.id(), def.id()), outer, self.src, &mut calls);

        let unit = CodeUnit {
            id: id.clone(),
            kind,
            name: Some(name),
            location: Location {
                path: self.path.to_string(),
                start_line,
                end_line,
            },
            text,
            children: Vec::new(),
            signature,
            signature_line: def_row + 1,
            calls,
        };
        self.units.push(unit);
        if let Some(p) = parent {
            self.units[p].children.push(ChildRef {
                id,
                edge: EdgeKind::Contains,
                line: def_row + 1,
            });
        }
        self.units.len() - 1
    }
}

/// Returns (outermost node incl. decorators, definition node) when `node` is a
/// function or class definition.
fn definition_of(node: Node) -> Option<(Node, Node)> {
    match node.kind() {
        FUNCTION | CLASS => Some((node, node)),
        DECORATED => node
            .child_by_field_name("definition")
            .filter(|d| matches!(d.kind(), FUNCTION | CLASS))
            .map(|d| (node, d)),
        _ => None,
    }
}

/// Last row holding a statement of the definition body. Trailing comments
/// are not part of the definition.
fn definition_end_row(def: Node) -> usize {
    let Some(body) = def.child_by_field_name("body") else {
        return end_row(def);
    };
    let mut cursor = body.walk();
    let last = body
        .named_children(&mut cursor)
        .filter(|c| c.kind() != "comment")
        .last();
    match last {
        Some(stmt) => end_row(stmt),
        None => end_row(def),
    }
}

fn end_row(node: Node) -> usize {
    let end = node.end_position();
    if end.column == 0 && end.row > node.start_position().row {
        end.row - 1
    } else {
        end.row
    }
}

fn collect_calls(own: (usize, usize), node: Node, src: &[u8], out: &mut Vec<CallSite>) {
    if node.id() != own.0 && node.id() != own.1 && definition_of(node).is_some() {
        return;
    }
    if node.kind() == "call" {
        if let Some(func) = node.child_by_field_name("function") {
            let target = match func.kind() {
                "identifier" => Some(func),
                "attribute" => func.child_by_field_name("attribute"),
                _ => None,
            };
            if let Some(t) = target.and_then(|t| t.utf8_text(src).ok()) {
                out.push(CallSite {
                    name: t.to_string(),
                    line: node.start_position().row + 1,
                    offset: node.start_byte(),
                });
            }
        }
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect_calls(own, child, src, out);
    }
}
