//! Trace documents: a reasoning block of `<node>` steps with optional
//! `<result>` feedback, followed by a `<workflow>` program.
//!
//! `<trace>` is accepted as an alias of `<thinking>`; rendering always
//! emits `<thinking>`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
}

fn malformed<T>(msg: impl Into<String>) -> Result<T, TraceError> {
    Err(TraceError::MalformedTrace(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Free text preceding the `<node>` tag.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub prose: String,
    pub node_line: String,
    /// Validator feedback; `None` means the step passed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub steps: Vec<TraceStep>,
    /// Free text after the last step inside the reasoning block.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub closing: String,
    pub workflow_lines: Vec<String>,
}

impl TraceDocument {
    pub fn new(steps: Vec<TraceStep>, workflow_lines: Vec<String>) -> Self {
        TraceDocument {
            steps,
            closing: String::new(),
            workflow_lines,
        }
    }

    /// Type names in the call position of each step's node line.
    pub fn instantiated_types(&self) -> Vec<String> {
        self.steps
            .iter()
            .filter_map(|s| super::parse_syntax(&s.node_line).ok())
            .filter_map(|s| s.type_name().map(str::to_string))
            .collect()
    }
}

impl TraceStep {
    pub fn accepted(node_line: impl Into<String>) -> Self {
        TraceStep {
            prose: String::new(),
            node_line: node_line.into(),
            result: None,
        }
    }

    pub fn rejected(node_line: impl Into<String>, result: impl Into<String>) -> Self {
        TraceStep {
            prose: String::new(),
            node_line: node_line.into(),
            result: Some(result.into()),
        }
    }
}

const TAGS: [&str; 10] = [
    "<thinking>",
    "</thinking>",
    "<trace>",
    "</trace>",
    "<node>",
    "</node>",
    "<result>",
    "</result>",
    "<workflow>",
    "</workflow>",
];

/// Position and text of the next known tag at or after `from`.
fn next_tag(s: &str, from: usize) -> Option<(usize, &'static str)> {
    let mut pos = from;
    while let Some(off) = s[pos..].find('<') {
        let at = pos + off;
        if let Some(tag) = TAGS.iter().find(|t| s[at..].starts_with(**t)) {
            return Some((at, tag));
        }
        pos = at + 1;
    }
    None
}

/// Whether `s` contains anything shaped like an XML tag.
fn contains_any_tag(s: &str) -> bool {
    let b = s.as_bytes();
    (0..b.len()).any(|i| {
        if b[i] != b'<' {
            return false;
        }
        let mut j = i + 1;
        if j < b.len() && b[j] == b'/' {
            j += 1;
        }
        if j >= b.len() || !b[j].is_ascii_alphabetic() {
            return false;
        }
        while j < b.len() && (b[j].is_ascii_alphanumeric() || b[j] == b'_' || b[j] == b'-') {
            j += 1;
        }
        j < b.len() && b[j] == b'>'
    })
}

pub fn parse_trace(doc: &[u8]) -> Result<TraceDocument, TraceError> {
    let Ok(text) = std::str::from_utf8(doc) else {
        return malformed("document is not valid UTF-8");
    };
    let text = text.trim();
    let (open, close) = if text.starts_with("<thinking>") {
        ("<thinking>", "</thinking>")
    } else if text.starts_with("<trace>") {
        ("<trace>", "</trace>")
    } else {
        return malformed("document must start with a <thinking> block");
    };

    let mut steps = Vec::new();
    let mut pos = open.len();
    let mut prose_start = pos;
    let reasoning_end = loop {
        let Some((at, tag)) = next_tag(text, pos) else {
            return malformed(format!("missing {close}"));
        };
        match tag {
            t if t == close => break at,
            "<node>" => {
                let start = at + tag.len();
                let Some((end, end_tag)) = next_tag(text, start) else {
                    return malformed("unterminated <node>");
                };
                if end_tag != "</node>" {
                    return malformed(format!("{end_tag} inside <node>"));
                }
                let line = text[start..end].trim();
                if line.is_empty() {
                    return malformed("empty <node>");
                }
                if line.contains('\n') {
                    return malformed("a <node> must hold exactly one line");
                }
                let prose = text[prose_start..at].trim().to_string();
                pos = end + "</node>".len();
                let mut result = None;
                let rest = &text[pos..];
                let skipped = rest.len() - rest.trim_start().len();
                if rest.trim_start().starts_with("<result>") {
                    let rstart = pos + skipped + "<result>".len();
                    let Some((rend, rtag)) = next_tag(text, rstart) else {
                        return malformed("unterminated <result>");
                    };
                    if rtag != "</result>" {
                        return malformed(format!("{rtag} inside <result>"));
                    }
                    result = Some(text[rstart..rend].trim().to_string());
                    pos = rend + "</result>".len();
                }
                steps.push(TraceStep {
                    prose,
                    node_line: line.to_string(),
                    result,
                });
                prose_start = pos;
            }
            "<result>" => return malformed("<result> must directly follow a </node>"),
            other => return malformed(format!("unexpected {other} inside the reasoning block")),
        }
    };
    let closing = text[prose_start..reasoning_end].trim().to_string();

    let rest = text[reasoning_end + close.len()..].trim_start();
    let Some(body) = rest.strip_prefix("<workflow>") else {
        return malformed("reasoning block must be followed by <workflow>");
    };
    let Some(end) = body.find("</workflow>") else {
        return malformed("missing </workflow>");
    };
    if !body[end + "</workflow>".len()..].trim().is_empty() {
        return malformed("text after </workflow>");
    }
    let workflow_lines = parse_workflow_block(&body[..end])?;
    Ok(TraceDocument {
        steps,
        closing,
        workflow_lines,
    })
}

/// Paren depth change of one physical line, ignoring string literals.
fn paren_delta(line: &str) -> i64 {
    let mut depth = 0;
    let mut in_str = false;
    let mut escaped = false;
    for c in line.chars() {
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
    }
    depth
}

/// Splits a workflow block into logical lines. A call whose parentheses
/// are still open at the end of a physical line continues on the next.
/// Blank lines and `STOP` are dropped.
pub fn parse_workflow_block(body: &str) -> Result<Vec<String>, TraceError> {
    if contains_any_tag(body) {
        return malformed("tags are not allowed inside <workflow>");
    }
    let mut lines = Vec::new();
    let mut pending = String::new();
    let mut depth = 0;
    for raw in body.lines() {
        let piece = raw.trim();
        if piece.is_empty() {
            continue;
        }
        if !pending.is_empty() {
            let joins_tight = pending.ends_with('(') || piece.starts_with(')');
            if !joins_tight {
                pending.push(' ');
            }
        }
        pending.push_str(piece);
        depth += paren_delta(piece);
        if depth <= 0 {
            if pending != "STOP" {
                lines.push(std::mem::take(&mut pending));
            }
            pending.clear();
            depth = 0;
        }
    }
    if !pending.is_empty() {
        return malformed("unbalanced parentheses in <workflow>");
    }
    Ok(lines)
}

pub fn render_trace(doc: &TraceDocument) -> String {
    let mut out = String::from("<thinking>");
    for step in &doc.steps {
        if !step.prose.is_empty() {
            out.push_str(&step.prose);
            out.push('\n');
        }
        out.push_str("<node>");
        out.push_str(&step.node_line);
        out.push_str("</node>");
        if let Some(r) = &step.result {
            out.push_str("<result>");
            out.push_str(r);
            out.push_str("</result>");
        }
        out.push('\n');
    }
    out.push_str(&doc.closing);
    out.push_str("</thinking>\n<workflow>\n");
    for line in &doc.workflow_lines {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("</workflow>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "<thinking>Load the model first.<node>a_0_x = A()</node>\n\
        Then wire it.<node>b_0_y = B(x=a_0_x)</node><result>TypeMismatch: nope</result>\
        <node>b_0_y = B(x=a_0_x)</node>done</thinking>\n\n<workflow>\na_0_x = A()\n  B(\n    x=a_0_x)\n</workflow>\n";

    #[test]
    fn parses_steps_and_workflow() {
        let doc = parse_trace(SAMPLE.as_bytes()).unwrap();
        assert_eq!(doc.steps.len(), 3);
        assert_eq!(doc.steps[0].prose, "Load the model first.");
        assert_eq!(doc.steps[0].result, None);
        assert_eq!(doc.steps[1].result.as_deref(), Some("TypeMismatch: nope"));
        assert_eq!(doc.closing, "done");
        assert_eq!(doc.workflow_lines, vec!["a_0_x = A()", "B(x=a_0_x)"]);
        assert_eq!(doc.instantiated_types(), vec!["A", "B", "B"]);
    }

    #[test]
    fn trace_tag_is_an_alias() {
        let alias = SAMPLE.replace("<thinking>", "<trace>").replace("</thinking>", "</trace>");
        assert_eq!(parse_trace(alias.as_bytes()), parse_trace(SAMPLE.as_bytes()));
    }

    #[test]
    fn render_then_parse_is_identity() {
        let doc = parse_trace(SAMPLE.as_bytes()).unwrap();
        let again = parse_trace(render_trace(&doc).as_bytes()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn rejects_bad_structure() {
        let bad = [
            "<workflow>A()</workflow><thinking><node>A()</node></thinking>",
            "<thinking><node>A()</node></thinking><workflow><node>A()</node></workflow>",
            "<thinking><node>A()</node></thinking><workflow>A()",
            "<thinking><node>A()</node></thinking><workflow>A()</workflow>trailing",
            "<thinking><node></node></thinking><workflow>A()</workflow>",
            "<thinking><node>A()\nB()</node></thinking><workflow>A()</workflow>",
            "<thinking><result>x</result></thinking><workflow>A()</workflow>",
            "<thinking><node>A()</thinking><workflow>A()</workflow>",
            "<thinking><node>A()</node></thinking>junk<workflow>A()</workflow>",
            "<thinking><node>A()</node></trace><workflow>A()</workflow>",
            "<thinking><node>A()</node></thinking><workflow>A(</workflow>",
            "<thinking><node>A()</node><workflow>A()</workflow>",
        ];
        for doc in bad {
            assert!(parse_trace(doc.as_bytes()).is_err(), "accepted {doc:?}");
        }
    }

    #[test]
    fn lt_in_prose_is_not_a_tag() {
        let doc = "<thinking>use a < b here<node>A()</node></thinking><workflow>A()</workflow>";
        assert_eq!(parse_trace(doc.as_bytes()).unwrap().steps[0].prose, "use a < b here");
    }

    #[test]
    fn stop_lines_dropped_from_workflow() {
        assert_eq!(parse_workflow_block("A()\nSTOP\n").unwrap(), vec!["A()"]);
    }
}
