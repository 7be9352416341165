//! Action lines and trace documents.
//!
//! An action line is parsed against the current graph: output variables
//! are the `<node_id>_<port>` names of nodes already in the graph, so the
//! graph itself is the binding environment.

mod render;
mod syntax;
mod trace;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::diagnostic::Diagnostic;
use crate::edit::{GraphEdit, PortRef};
use crate::graph::WorkflowGraph;
use crate::schema::SchemaRegistry;

pub use render::{
    render_edit, render_graph_lines, render_node_line, render_value, render_workflow_lines, NotExecutable,
};
pub use syntax::{parse_syntax, ActionSyntax, ArgValue, Operand};
pub use trace::{
    parse_trace, parse_workflow_block, render_trace, TraceDocument, TraceError, TraceStep,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("{type_name} declares {expected} outputs but {got} variables were bound")]
    ArityMismatch {
        type_name: String,
        expected: usize,
        got: usize,
    },
}

impl ActionError {
    pub fn to_diagnostic(&self) -> Diagnostic {
        match self {
            ActionError::Syntax(m) => Diagnostic::syntax(m.clone()),
            ActionError::UnknownVariable(v) => Diagnostic::unknown_variable(v),
            ActionError::ArityMismatch {
                type_name,
                expected,
                got,
            } => Diagnostic::arity(type_name, *expected, *got),
        }
    }
}

fn resolve(op: &Operand, graph: &WorkflowGraph, registry: &SchemaRegistry) -> Result<PortRef, ActionError> {
    match op {
        Operand::Port(p) => Ok(p.clone()),
        Operand::Var(v) => graph
            .resolve_var(v, registry)
            .ok_or_else(|| ActionError::UnknownVariable(v.clone())),
    }
}

/// Parses one action line into an ordered edit list.
///
/// A node line yields `AddNode` followed by one `AddEdge` per keyword
/// argument that names a variable or port; literal arguments become
/// construction params. Every other form yields exactly one edit.
pub fn parse_action(
    text: &str,
    graph: &WorkflowGraph,
    registry: &SchemaRegistry,
) -> Result<Vec<GraphEdit>, ActionError> {
    let syntax = parse_syntax(text).map_err(ActionError::Syntax)?;
    lower(syntax, graph, registry)
}

/// Resolves an already parsed line against `graph`.
pub fn lower(
    syntax: ActionSyntax,
    graph: &WorkflowGraph,
    registry: &SchemaRegistry,
) -> Result<Vec<GraphEdit>, ActionError> {
    match syntax {
        ActionSyntax::Stop => Ok(vec![GraphEdit::Stop]),
        ActionSyntax::Connect { src, dst } => Ok(vec![GraphEdit::AddEdge {
            src: resolve(&src, graph, registry)?,
            dst,
        }]),
        ActionSyntax::Disconnect { dst } => Ok(vec![GraphEdit::RemoveEdge { dst }]),
        ActionSyntax::Set { target, value } => Ok(vec![GraphEdit::SetParam {
            node_id: target.node_id,
            param: target.port,
            value,
        }]),
        ActionSyntax::Call {
            outputs,
            type_name,
            args,
        } => {
            let node_id = graph.next_node_id(&type_name);
            let mut params = BTreeMap::new();
            let mut edges = Vec::new();
            for (key, value) in args {
                match value {
                    ArgValue::Literal(v) => {
                        params.insert(key, v);
                    }
                    ArgValue::Ref(op) => {
                        let src = resolve(&op, graph, registry)?;
                        edges.push(GraphEdit::AddEdge {
                            src,
                            dst: PortRef::new(node_id.clone(), key),
                        });
                    }
                }
            }
            if let (Some(vars), Some(def)) = (&outputs, registry.lookup(&type_name)) {
                if vars.len() != def.outputs.len() {
                    return Err(ActionError::ArityMismatch {
                        type_name,
                        expected: def.outputs.len(),
                        got: vars.len(),
                    });
                }
                for (var, out) in vars.iter().zip(&def.outputs) {
                    let want = WorkflowGraph::output_var(&node_id, &out.name);
                    if *var != want {
                        return Err(ActionError::Syntax(format!(
                            "output variable `{var}` should be `{want}`"
                        )));
                    }
                }
            }
            let mut out = vec![GraphEdit::AddNode { type_name, params }];
            out.extend(edges);
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use serde_json::json;

    fn reg() -> SchemaRegistry {
        SchemaRegistry::bundled("mini-sd").unwrap()
    }

    #[test]
    fn checkpoint_line_binds_three_outputs() {
        let r = reg();
        let edits = parse_action(fixtures::TEXT_TO_IMAGE_LINES[0], &WorkflowGraph::empty(), &r).unwrap();
        assert_eq!(edits, vec![GraphEdit::add_node("CheckpointLoader")]);
    }

    #[test]
    fn stop_keyword() {
        let r = reg();
        assert_eq!(
            parse_action("STOP", &WorkflowGraph::empty(), &r).unwrap(),
            vec![GraphEdit::Stop]
        );
    }

    #[test]
    fn undefined_variable() {
        let r = reg();
        let err = parse_action("x = Sampler(model=undefined_var)", &WorkflowGraph::empty(), &r);
        assert_eq!(err, Err(ActionError::UnknownVariable("undefined_var".into())));
    }

    #[test]
    fn wrong_output_count() {
        let r = reg();
        let err = parse_action("a, b = EmptyLatent()", &WorkflowGraph::empty(), &r).unwrap_err();
        assert!(matches!(err, ActionError::ArityMismatch { expected: 1, got: 2, .. }));
    }

    #[test]
    fn wrong_output_name_is_syntax() {
        let r = reg();
        let err = parse_action("latent = EmptyLatent()", &WorkflowGraph::empty(), &r).unwrap_err();
        assert!(matches!(err, ActionError::Syntax(_)));
    }

    #[test]
    fn node_line_expands_to_implied_edges() {
        let r = reg();
        let g = fixtures::text_to_image(&r);
        let edits = parse_action(
            "sampler_1_latent = Sampler(steps=5, latent=sampler_0_latent, model=checkpointloader_0.model)",
            &g,
            &r,
        )
        .unwrap();
        assert_eq!(edits.len(), 3);
        assert_eq!(
            edits[0],
            GraphEdit::add_node_with("Sampler", [("steps".to_string(), json!(5))])
        );
        assert_eq!(
            edits[1],
            GraphEdit::add_edge(fixtures::port("sampler_0.latent"), fixtures::port("sampler_1.latent"))
        );
        assert_eq!(
            edits[2],
            GraphEdit::add_edge(fixtures::port("checkpointloader_0.model"), fixtures::port("sampler_1.model"))
        );
    }

    #[test]
    fn edge_and_param_forms() {
        let r = reg();
        let g = fixtures::text_to_image(&r);
        assert_eq!(
            parse_action("connect(emptylatent_0_latent, decode_0.samples)", &g, &r).unwrap(),
            vec![GraphEdit::add_edge(
                fixtures::port("emptylatent_0.latent"),
                fixtures::port("decode_0.samples")
            )]
        );
        assert_eq!(
            parse_action("disconnect(decode_0.samples)", &g, &r).unwrap(),
            vec![GraphEdit::RemoveEdge {
                dst: fixtures::port("decode_0.samples")
            }]
        );
        assert_eq!(
            parse_action("set(sampler_0.steps, 20)", &g, &r).unwrap(),
            vec![GraphEdit::SetParam {
                node_id: "sampler_0".into(),
                param: "steps".into(),
                value: json!(20)
            }]
        );
    }

    #[test]
    fn deterministic() {
        let r = reg();
        let g = fixtures::text_to_image(&r);
        for line in fixtures::TEXT_TO_IMAGE_LINES {
            assert_eq!(parse_action(line, &g, &r), parse_action(line, &g, &r));
        }
    }
}
