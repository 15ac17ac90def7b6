//! Rendering of quiescent results: the canonical trace, human-readable
//! diagnostics and JSON lines.

use std::fmt::Write as _;
use std::ops::Range;

use serde::Serialize;

use crate::document::{DocumentVersion, NodeName};
use crate::message::Severity;
use crate::scheduler::{ExecStatus, SpanOutcome};

/// The canonical trace: per node in path order, per span in document order,
/// the keyword, status, messages and flattened markup. Ranges are node
/// offsets. Execution and span ids are omitted so that traces of different
/// runs compare byte for byte.
pub fn render_trace(outcomes: &[(NodeName, Vec<SpanOutcome>)]) -> String {
    let mut out = String::new();
    for (node, spans) in outcomes {
        writeln!(out, "node {node}").unwrap();
        for s in spans {
            let base = s.span.range.start;
            writeln!(
                out,
                "  span {}..{} {} {}",
                s.span.range.start, s.span.range.end, s.span.keyword, s.status
            )
            .unwrap();
            let Some(result) = &s.result else { continue };
            for m in &result.messages {
                write!(out, "    {} ", m.severity).unwrap();
                match &m.range {
                    Some(r) => write!(out, "{}..{}", base + r.start, base + r.end).unwrap(),
                    None => out.push('-'),
                }
                writeln!(out, " {:?}", m.text).unwrap();
            }
            for (depth, n) in result.markup.walk() {
                let labels: Vec<String> = n.labels.iter().map(ToString::to_string).collect();
                writeln!(
                    out,
                    "    markup {}{}..{} {}",
                    "  ".repeat(depth),
                    base + n.range.start,
                    base + n.range.end,
                    labels.join(" ")
                )
                .unwrap();
            }
        }
    }
    out
}

/// 1-based line and column (in characters) of a character offset.
pub fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut column = 1;
    for c in text.chars().take(offset) {
        if c == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    (line, column)
}

/// One line of `check --json` output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JsonLine {
    Message {
        node: String,
        keyword: String,
        status: ExecStatus,
        span: Range<usize>,
        severity: Severity,
        text: String,
        range: Option<Range<usize>>,
        line: usize,
        column: usize,
    },
    Summary {
        nodes: usize,
        commands: usize,
        finished: usize,
        failed: usize,
    },
}

/// Diagnostics of every command, in trace order. Ranges are node offsets.
pub fn diagnostics(version: &DocumentVersion, outcomes: &[(NodeName, Vec<SpanOutcome>)]) -> Vec<JsonLine> {
    let mut lines = Vec::new();
    let (mut commands, mut finished, mut failed) = (0, 0, 0);
    for (node, spans) in outcomes {
        let text = version.text(node).unwrap_or_default();
        for s in spans {
            commands += 1;
            match s.status {
                ExecStatus::Finished => finished += 1,
                ExecStatus::Failed => failed += 1,
                _ => {}
            }
            let Some(result) = &s.result else { continue };
            let base = s.span.range.start;
            for m in &result.messages {
                let range = m.range.as_ref().map(|r| base + r.start..base + r.end);
                let (line, column) = line_column(text, range.as_ref().map_or(base, |r| r.start));
                lines.push(JsonLine::Message {
                    node: node.to_string(),
                    keyword: s.span.keyword.clone(),
                    status: s.status,
                    span: s.span.range.clone(),
                    severity: m.severity,
                    text: m.text.clone(),
                    range,
                    line,
                    column,
                });
            }
        }
    }
    lines.push(JsonLine::Summary {
        nodes: outcomes.len(),
        commands,
        finished,
        failed,
    });
    lines
}

/// `node:line:column: severity: text`, or the closing summary sentence.
pub fn human_line(line: &JsonLine) -> String {
    match line {
        JsonLine::Message {
            node,
            severity,
            text,
            line,
            column,
            ..
        } => format!("{node}:{line}:{column}: {severity}: {text}"),
        JsonLine::Summary {
            nodes,
            commands,
            failed,
            ..
        } => format!("{nodes} theories, {commands} commands, {failed} failed"),
    }
}
