use serde_json::Value;
use thiserror::Error;

use crate::diagnostic::Diagnostic;
use crate::edit::{GraphEdit, PortRef};
use crate::graph::{final_check, NodeInstance, WorkflowGraph};
use crate::schema::SchemaRegistry;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("graph is not executable ({} diagnostics)", .0.len())]
pub struct NotExecutable(pub Vec<Diagnostic>);

/// JSON literal form of a value, as accepted by the action grammar.
pub fn render_value(v: &Value) -> String {
    serde_json::to_string(v).expect("json values always serialize")
}

fn source_operand(src: &PortRef, graph: &WorkflowGraph, registry: &SchemaRegistry) -> String {
    let var = WorkflowGraph::output_var(&src.node_id, &src.port);
    match graph.resolve_var(&var, registry) {
        Some(p) if p == *src => var,
        _ => src.to_string(),
    }
}

fn call_line<'a>(
    node_id: &str,
    type_name: &str,
    params: impl Iterator<Item = (&'a String, &'a Value)>,
    inputs: &[(String, String)],
    registry: &SchemaRegistry,
) -> String {
    let mut args: Vec<String> = params
        .map(|(k, v)| format!("{k}={}", render_value(v)))
        .collect();
    args.extend(inputs.iter().map(|(k, v)| format!("{k}={v}")));
    let call = format!("{type_name}({})", args.join(", "));
    let outputs: Vec<String> = registry
        .lookup(type_name)
        .map(|d| {
            d.outputs
                .iter()
                .map(|o| WorkflowGraph::output_var(node_id, &o.name))
                .collect()
        })
        .unwrap_or_default();
    if outputs.is_empty() {
        call
    } else {
        format!("{} = {call}", outputs.join(", "))
    }
}

/// The node line that instantiates `node` with its params and every
/// connected input, in declared input order.
pub fn render_node_line(node: &NodeInstance, graph: &WorkflowGraph, registry: &SchemaRegistry) -> String {
    let inputs: Vec<(String, String)> = registry
        .lookup(&node.type_name)
        .map(|d| {
            d.inputs
                .iter()
                .filter_map(|i| {
                    let src = graph.source_of(&PortRef::new(&node.node_id, &i.name))?;
                    Some((i.name.clone(), source_operand(src, graph, registry)))
                })
                .collect()
        })
        .unwrap_or_default();
    call_line(&node.node_id, &node.type_name, node.params.iter(), &inputs, registry)
}

/// Action text for one edit applied to `graph`.
pub fn render_edit(edit: &GraphEdit, graph: &WorkflowGraph, registry: &SchemaRegistry) -> String {
    match edit {
        GraphEdit::AddNode { type_name, params } => {
            let id = graph.next_node_id(type_name);
            call_line(&id, type_name, params.iter(), &[], registry)
        }
        GraphEdit::AddEdge { src, dst } => {
            format!("connect({}, {dst})", source_operand(src, graph, registry))
        }
        GraphEdit::RemoveEdge { dst } => format!("disconnect({dst})"),
        GraphEdit::SetParam {
            node_id,
            param,
            value,
        } => format!("set({node_id}.{param}, {})", render_value(value)),
        GraphEdit::Stop => "STOP".to_string(),
    }
}

/// One node line per node in topological order (ties by node id).
///
/// Ids are renumbered along that order first, so parsing the lines from an
/// empty graph always rebuilds [`WorkflowGraph::renumbered`], which is
/// `graph` itself whenever its per-type counters already increase along
/// the order.
pub fn render_workflow_lines(
    graph: &WorkflowGraph,
    registry: &SchemaRegistry,
) -> Result<Vec<String>, NotExecutable> {
    let outcome = final_check(graph, registry);
    if !outcome.accepted {
        return Err(NotExecutable(outcome.diagnostics));
    }
    Ok(render_graph_lines(graph, registry).expect("accepted graphs are acyclic"))
}

/// Node lines in topological order without the executability check;
/// `None` for a cyclic graph.
pub fn render_graph_lines(graph: &WorkflowGraph, registry: &SchemaRegistry) -> Option<Vec<String>> {
    let (g, order) = graph.renumbered()?;
    Some(
        order
            .iter()
            .map(|id| render_node_line(g.node(id).expect("ordered ids exist"), &g, registry))
            .collect(),
    )
}
