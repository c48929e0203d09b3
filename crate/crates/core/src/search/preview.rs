//! Compact code previews: a unit's signature plus the lines that matter
//! (child invocation context or matched lines), capped by a line budget.

use serde::{Deserialize, Serialize};

use crate::index::CodeUnit;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewLine {
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CodePreview {
    pub signature: Vec<PreviewLine>,
    pub context: Vec<PreviewLine>,
    /// Lines dropped to stay within budget.
    pub elided: usize,
    /// Set when the preview is the unit's full source (ablation mode).
    pub full: bool,
}

impl CodePreview {
    /// Rendered preview lines, including the elision marker.
    pub fn line_count(&self) -> usize {
        self.signature.len() + self.context.len() + usize::from(self.elided > 0 && self.has_budget_marker())
    }

    fn has_budget_marker(&self) -> bool {
        !self.signature.is_empty() || !self.context.is_empty()
    }

    pub fn render(&self, out: &mut String, indent: &str) {
        for l in self.signature.iter().chain(&self.context) {
            out.push_str(&format!("{indent}{:>5} | {}\n", l.line, l.text));
        }
        if self.elided > 0 {
            if self.has_budget_marker() {
                out.push_str(&format!("{indent}  ... ({} more lines)\n", self.elided));
            } else {
                out.push_str(&format!(
                    "{indent}(preview omitted: response budget reached, {} lines)\n",
                    self.elided
                ));
            }
        }
    }
}

fn unit_line(unit: &CodeUnit, line: usize) -> Option<PreviewLine> {
    let offset = line.checked_sub(unit.location.start_line)?;
    unit.text.split('\n').nth(offset).map(|t| PreviewLine {
        line,
        text: t.trim_end().to_string(),
    })
}

fn signature_lines(unit: &CodeUnit) -> Vec<PreviewLine> {
    if !unit.is_definition() {
        return Vec::new();
    }
    let n = unit.signature.split('\n').count();
    (unit.signature_line..unit.signature_line + n)
        .filter_map(|l| unit_line(unit, l))
        .collect()
}

/// Lines of `unit` where its children appear: nested definition headers and
/// call sites of invoked units.
pub fn invocation_lines(unit: &CodeUnit) -> Vec<usize> {
    unit.children.iter().map(|c| c.line).collect()
}

/// Builds a preview showing the signature and `extra` lines, truncated so
/// that the rendered line count never exceeds `budget`.
pub fn build(unit: &CodeUnit, extra: &[usize], budget: usize) -> CodePreview {
    let signature = signature_lines(unit);
    let sig_range = signature
        .first()
        .map(|f| f.line..f.line + signature.len())
        .unwrap_or(0..0);
    let mut lines: Vec<usize> = extra.iter().copied().filter(|l| !sig_range.contains(l)).collect();
    lines.sort_unstable();
    lines.dedup();
    let context: Vec<PreviewLine> = lines.into_iter().filter_map(|l| unit_line(unit, l)).collect();

    let total = signature.len() + context.len();
    if total <= budget {
        return CodePreview {
            signature,
            context,
            elided: 0,
            full: false,
        };
    }
    if budget == 0 {
        return CodePreview {
            elided: total,
            ..CodePreview::default()
        };
    }
    let keep = budget - 1;
    let mut all: Vec<PreviewLine> = signature.into_iter().chain(context).collect();
    let elided = all.len() - keep;
    all.truncate(keep);
    let sig_len = all.iter().take_while(|l| sig_range.contains(&l.line)).count();
    let context = all.split_off(sig_len);
    CodePreview {
        signature: all,
        context,
        elided,
        full: false,
    }
}

/// The whole unit, unbudgeted.
pub fn full(unit: &CodeUnit) -> CodePreview {
    CodePreview {
        signature: Vec::new(),
        context: unit
            .text
            .split('\n')
            .enumerate()
            .map(|(i, t)| PreviewLine {
                line: unit.location.start_line + i,
                text: t.trim_end().to_string(),
            })
            .collect(),
        elided: 0,
        full: true,
    }
}
