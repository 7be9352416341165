//! Terminal reward for a trace document against a target workflow.
//!
//! Two veto gates (format, then consistency) followed by a graded
//! node-type recall score. Any failed gate yields -1; otherwise the final
//! reward is `(3 + recall_term) / 3`, which lies in `[2/3, 1]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_action, parse_trace, TraceDocument};
use crate::graph::WorkflowGraph;
use crate::schema::SchemaRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("target workflow has no nodes")]
    EmptyTarget,
}

/// Why a document failed the format gate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatFailure {
    #[error(transparent)]
    Trace(#[from] crate::action::TraceError),
    #[error("workflow block is empty")]
    EmptyWorkflow,
    #[error("workflow line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_f: i8,
    pub r_c: i8,
    pub recall_term: f64,
    #[serde(rename = "final")]
    pub final_reward: f64,
}

impl RewardBreakdown {
    pub fn gates_passed(&self) -> bool {
        self.r_f == 0 && self.r_c == 0
    }
}

/// Builds the workflow graph a trace's `<workflow>` block describes.
/// Lines are applied structurally, without validation; every referenced
/// variable, port and node type must resolve.
pub fn workflow_graph(
    doc: &TraceDocument,
    registry: &SchemaRegistry,
) -> Result<WorkflowGraph, FormatFailure> {
    if doc.workflow_lines.is_empty() {
        return Err(FormatFailure::EmptyWorkflow);
    }
    let mut g = WorkflowGraph::empty();
    for (i, line) in doc.workflow_lines.iter().enumerate() {
        let fail = |message: String| FormatFailure::Line { line: i + 1, message };
        let edits = parse_action(line, &g, registry).map_err(|e| fail(e.to_string()))?;
        for edit in &edits {
            if let crate::edit::GraphEdit::AddNode { type_name, .. } = edit {
                if registry.lookup(type_name).is_none() {
                    return Err(fail(format!("unknown node type `{type_name}`")));
                }
            }
            g = g.apply_edit(edit, registry).map_err(|e| fail(e.to_string()))?;
        }
    }
    Ok(g)
}

/// Format gate: the document parses as a trace and its workflow block
/// builds a graph. Returns the parsed pieces on success.
pub fn score_format(
    doc: &[u8],
    registry: &SchemaRegistry,
) -> Result<(TraceDocument, WorkflowGraph), FormatFailure> {
    let trace = parse_trace(doc)?;
    let graph = workflow_graph(&trace, registry)?;
    Ok((trace, graph))
}

/// Consistency gate: every node type instantiated by the workflow is the
/// call-position type name of at least one `<node>` line.
pub fn score_consistency(doc: &TraceDocument, graph: &WorkflowGraph) -> bool {
    let mentioned: BTreeSet<String> = doc.instantiated_types().into_iter().collect();
    graph.type_names().iter().all(|t| mentioned.contains(*t))
}

/// `|Types(G_T) ∩ Types(G*)| / |Types(G*)| - 1`, over sets of type names.
pub fn recall_term(g_t: &WorkflowGraph, g_star: &WorkflowGraph) -> Result<f64, RewardError> {
    let target = g_star.type_names();
    if target.is_empty() {
        return Err(RewardError::EmptyTarget);
    }
    let hit = g_t.type_names().intersection(&target).count();
    Ok(hit as f64 / target.len() as f64 - 1.0)
}

pub fn final_reward(
    doc: &[u8],
    g_star: &WorkflowGraph,
    registry: &SchemaRegistry,
) -> Result<RewardBreakdown, RewardError> {
    if g_star.is_empty() {
        return Err(RewardError::EmptyTarget);
    }
    let Ok((trace, graph)) = score_format(doc, registry) else {
        return Ok(RewardBreakdown {
            r_f: -1,
            r_c: 0,
            recall_term: -1.0,
            final_reward: -1.0,
        });
    };
    let recall = recall_term(&graph, g_star)?;
    if !score_consistency(&trace, &graph) {
        return Ok(RewardBreakdown {
            r_f: 0,
            r_c: -1,
            recall_term: recall,
            final_reward: -1.0,
        });
    }
    Ok(RewardBreakdown {
        r_f: 0,
        r_c: 0,
        recall_term: recall,
        final_reward: (3.0 + recall) / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{render_trace, render_workflow_lines, TraceStep};
    use crate::fixtures;

    fn doc_for(lines: &[String]) -> String {
        let steps = lines.iter().map(TraceStep::accepted).collect();
        render_trace(&TraceDocument::new(steps, lines.to_vec()))
    }

    #[test]
    fn perfect_match_scores_one() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = fixtures::text_to_image(&r);
        let lines = render_workflow_lines(&g, &r).unwrap();
        let b = final_reward(doc_for(&lines).as_bytes(), &g, &r).unwrap();
        assert_eq!(b.final_reward, 1.0);
        assert_eq!(b.recall_term, 0.0);
    }

    #[test]
    fn worked_value() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let target = fixtures::decode_empty_latent(&r);
        // three of the four target types
        let lines: Vec<String> = fixtures::TEXT_TO_IMAGE_LINES[..2]
            .iter()
            .map(|s| s.to_string())
            .chain(["decode_0_image = Decode()".to_string()])
            .collect();
        let b = final_reward(doc_for(&lines).as_bytes(), &target, &r).unwrap();
        assert!((b.recall_term + 0.25).abs() < 1e-15);
        assert!((b.final_reward - 11.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn gates() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let g = fixtures::text_to_image(&r);
        let b = final_reward(b"not a trace", &g, &r).unwrap();
        assert_eq!((b.r_f, b.final_reward), (-1, -1.0));
        let missing_close = "<thinking><node>a = B()</node></thinking><workflow>\nB()\n";
        assert_eq!(final_reward(missing_close.as_bytes(), &g, &r).unwrap().final_reward, -1.0);
        let bad_line = "<thinking><node>EmptyLatent()</node></thinking><workflow>\nEmptyLatent(\n</workflow>";
        assert_eq!(final_reward(bad_line.as_bytes(), &g, &r).unwrap().r_f, -1);
        let inconsistent = "<thinking><node>emptylatent_0_latent = EmptyLatent()</node></thinking>\
            <workflow>\nemptylatent_0_latent = EmptyLatent()\ndecode_0_image = Decode(samples=emptylatent_0_latent)\n</workflow>";
        let b = final_reward(inconsistent.as_bytes(), &g, &r).unwrap();
        assert_eq!((b.r_f, b.r_c, b.final_reward), (0, -1, -1.0));
        let empty = "<thinking><node>EmptyLatent()</node></thinking><workflow>\n</workflow>";
        assert_eq!(final_reward(empty.as_bytes(), &g, &r).unwrap().r_f, -1);
    }

    #[test]
    fn recall_examples() {
        let r = SchemaRegistry::bundled("mini-sd").unwrap();
        let target = fixtures::text_to_image(&r);
        assert_eq!(recall_term(&target, &target).unwrap(), 0.0);
        assert_eq!(recall_term(&WorkflowGraph::empty(), &target).unwrap(), -1.0);
        assert_eq!(
            recall_term(&target, &WorkflowGraph::empty()),
            Err(RewardError::EmptyTarget)
        );
    }
}
